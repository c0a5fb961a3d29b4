#pragma once

#include "natex/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace natex::testing {

// Three latent groups drive four covariates and the treatment; within a
// group the outcome falls with the treatment, across groups it rises.
inline Dataset confounded(std::size_t n, std::uint64_t seed = 7, double within_slope = -0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::vector<double>> cols(6, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(i % 3);
        cols[0][i] = 3.0 * g + noise(rng);         // c1
        cols[1][i] = -2.0 * g + noise(rng);        // c2
        cols[2][i] = g * g + 0.5 * noise(rng);     // c3
        cols[3][i] = noise(rng);                   // c4, pure noise
        cols[4][i] = 2.0 * g + noise(rng);         // t
        cols[5][i] = within_slope * cols[4][i] + 5.0 * g + 0.5 * noise(rng); // y
    }
    auto ds = Dataset::from_columns("confounded", {"c1", "c2", "c3", "c4", "t", "y"}, cols);
    const std::vector<std::string> outcomes{"y"};
    return assign_roles(ds, {}, outcomes);
}

inline std::string to_csv(const Dataset& ds) {
    std::ostringstream os;
    write_csv(ds, os);
    return os.str();
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("natex-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

} // namespace natex::testing
