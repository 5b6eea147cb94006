#pragma once

// Seeded Brownian ensembles. Every increment is addressed by
// (seed, path, step, component) in a counter-based generator, so an ensemble
// is reproduced bit-for-bit regardless of how paths are split across workers.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "absde/core.hpp"
#include "absde/model.hpp"
#include "absde/random.hpp"

namespace absde {

inline constexpr const char* kScheme = "philox4x32-10/box-muller/v1";

class PathEnsemble {
public:
    PathEnsemble(TimeGrid grid, std::size_t n_paths, std::size_t dim, std::uint64_t seed, bool antithetic,
                 std::vector<double> values)
        : grid_(grid), n_paths_(n_paths), dim_(dim), seed_(seed), antithetic_(antithetic),
          values_(std::move(values)) {
        require(values_.size() == n_paths_ * grid_.n_points() * dim_, Errc::invalid_argument,
                "ensemble payload size does not match its header");
    }

    const TimeGrid& grid() const { return grid_; }
    std::size_t n_paths() const { return n_paths_; }
    std::size_t dim() const { return dim_; }
    std::uint64_t seed() const { return seed_; }
    bool antithetic() const { return antithetic_; }
    const char* scheme() const { return kScheme; }

    /// W_{t_i} component k on path p.
    double w(std::size_t p, std::size_t i, std::size_t k = 0) const {
        return values_[(p * grid_.n_points() + i) * dim_ + k];
    }

    /// Component-0 states of all paths at step i.
    std::vector<double> states(std::size_t i) const {
        std::vector<double> out(n_paths_);
        for (std::size_t p = 0; p < n_paths_; ++p) out[p] = w(p, i);
        return out;
    }

    const std::vector<double>& raw() const { return values_; }

private:
    TimeGrid grid_;
    std::size_t n_paths_;
    std::size_t dim_;
    std::uint64_t seed_;
    bool antithetic_;
    std::vector<double> values_;
};

/// Discretised d-dimensional Brownian motion on the grid; W_0 = 0 and each
/// increment is N(0, dt) per component. With antithetic pairing, odd paths
/// are the reflection of the preceding even path.
inline PathEnsemble generate_ensemble(const TimeGrid& grid, std::size_t n_paths, std::size_t dim, std::uint64_t seed,
                                      bool antithetic = false) {
    require(n_paths >= 1, Errc::invalid_argument, "n_paths must be >= 1");
    require(dim >= 1, Errc::invalid_argument, "dim must be >= 1");
    const std::size_t np = grid.n_points();
    const double sdt = std::sqrt(grid.dt());
    std::vector<double> values(n_paths * np * dim, 0.0);
    CounterStream stream(seed);
    parallel_for(n_paths, [&](std::size_t p) {
        std::size_t src = p;
        double sign = 1.0;
        if (antithetic && (p % 2 == 1)) {
            src = p - 1;
            sign = -1.0;
        }
        double* row = values.data() + p * np * dim;
        for (std::size_t i = 0; i + 1 < np; ++i) {
            for (std::size_t k = 0; k < dim; k += 2) {
                auto z = stream.normals(src, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k / 2));
                for (std::size_t c = k; c < std::min(dim, k + 2); ++c)
                    row[(i + 1) * dim + c] = row[i * dim + c] + sign * sdt * z[c - k];
            }
        }
    });
    return PathEnsemble(grid, n_paths, dim, seed, antithetic, std::move(values));
}

/// Per-path increments W_{t_{i+1}} - W_{t_i}, laid out [path][component].
inline std::vector<double> increment_slice(const PathEnsemble& ens, std::size_t i) {
    require(i < ens.grid().n_steps(), Errc::index_out_of_range,
            strformat("increment index %zu outside [0, %zu)", i, ens.grid().n_steps()));
    std::vector<double> out(ens.n_paths() * ens.dim());
    for (std::size_t p = 0; p < ens.n_paths(); ++p)
        for (std::size_t k = 0; k < ens.dim(); ++k) out[p * ens.dim() + k] = ens.w(p, i + 1, k) - ens.w(p, i, k);
    return out;
}

// ---------------------------------------------------------------------------
// Binary dump: magic, seed, T, K, n_steps, dim, n_paths, antithetic, payload.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kEnsembleMagic[8] = {'A', 'B', 'S', 'D', 'E', 'P', 'E', '1'};

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail(Errc::io_error, "truncated ensemble file");
    return v;
}
}  // namespace detail

inline void save_ensemble(const PathEnsemble& ens, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(Errc::io_error, "cannot open " + path);
    os.write(detail::kEnsembleMagic, sizeof(detail::kEnsembleMagic));
    detail::put<std::uint64_t>(os, ens.seed());
    detail::put<double>(os, ens.grid().t_end());
    detail::put<double>(os, ens.grid().k_extra());
    detail::put<std::uint64_t>(os, ens.grid().n_steps());
    detail::put<std::uint64_t>(os, ens.dim());
    detail::put<std::uint64_t>(os, ens.n_paths());
    detail::put<std::uint8_t>(os, ens.antithetic() ? 1 : 0);
    os.write(reinterpret_cast<const char*>(ens.raw().data()),
             static_cast<std::streamsize>(ens.raw().size() * sizeof(double)));
    if (!os) fail(Errc::io_error, "write failed for " + path);
}

inline PathEnsemble load_ensemble(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(Errc::io_error, "cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kEnsembleMagic, sizeof(magic)) != 0)
        fail(Errc::io_error, path + " is not an ensemble dump");
    auto seed = detail::get<std::uint64_t>(is);
    auto t_end = detail::get<double>(is);
    auto k_extra = detail::get<double>(is);
    auto n_steps = detail::get<std::uint64_t>(is);
    auto dim = detail::get<std::uint64_t>(is);
    auto n_paths = detail::get<std::uint64_t>(is);
    auto anti = detail::get<std::uint8_t>(is);
    TimeGrid grid(t_end, k_extra, n_steps);
    std::vector<double> values(n_paths * grid.n_points() * dim);
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) fail(Errc::io_error, "truncated ensemble payload in " + path);
    return PathEnsemble(grid, n_paths, dim, seed, anti != 0, std::move(values));
}

}  // namespace absde
