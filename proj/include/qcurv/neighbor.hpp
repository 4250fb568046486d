#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "qcurv/geometry.hpp"

namespace qcurv {

/// Cell-hash neighbor index over a point cloud. Torus cells live in the
/// periodic chart, sphere cells in the R^5 embedding (chordal radius).
class NeighborIndex {
public:
    NeighborIndex(const ModelManifold& M, const std::vector<Chart>& pts, double radius)
        : M_(M.metric_model()), pts_(pts), radius_(radius) {
        torus_ = (M_.kind == ManifoldKind::Torus);
        constexpr double kPi = 3.14159265358979323846;
        cell_ = torus_ ? radius
                       : 2.0 * std::sin(std::min(radius, kPi * M_.radius) / (2.0 * M_.radius));
        cell_ = std::max(cell_, 1e-9);
        if (!torus_) {
            emb_.reserve(pts.size());
            for (const auto& p : pts) emb_.push_back(M_.embed(p));
        }
        for (std::size_t i = 0; i < pts.size(); ++i) map_[key_of(i)].push_back(static_cast<int>(i));
    }

    /// Visit indices of points within geodesic distance <= radius of `center`.
    template <class F>
    void for_ball(const Chart& center, F&& fn) const {
        if (torus_) {
            std::array<long, 4> c;
            for (int t = 0; t < 4; ++t) c[t] = cell_of(center[t]);
            std::array<long, 4> o;
            for (o[0] = -1; o[0] <= 1; ++o[0])
                for (o[1] = -1; o[1] <= 1; ++o[1])
                    for (o[2] = -1; o[2] <= 1; ++o[2])
                        for (o[3] = -1; o[3] <= 1; ++o[3]) {
                            auto it = map_.find(pack_torus(c, o));
                            if (it == map_.end()) continue;
                            for (int j : it->second)
                                if (M_.distance(center, pts_[j]) <= radius_) fn(j);
                        }
            return;
        }
        Vec5 e = M_.embed(center);
        std::array<long, 5> c;
        for (int t = 0; t < 5; ++t) c[t] = static_cast<long>(std::floor(e[t] / cell_));
        std::array<long, 5> o;
        for (o[0] = -1; o[0] <= 1; ++o[0])
            for (o[1] = -1; o[1] <= 1; ++o[1])
                for (o[2] = -1; o[2] <= 1; ++o[2])
                    for (o[3] = -1; o[3] <= 1; ++o[3])
                        for (o[4] = -1; o[4] <= 1; ++o[4]) {
                            auto it = map_.find(pack_sphere(c, o));
                            if (it == map_.end()) continue;
                            for (int j : it->second)
                                if (M_.distance(center, pts_[j]) <= radius_) fn(j);
                        }
    }

private:
    const ModelManifold& M_;
    const std::vector<Chart>& pts_;
    double radius_, cell_;
    bool torus_;
    std::vector<Vec5> emb_;
    std::unordered_map<std::uint64_t, std::vector<int>> map_;

    long cell_of(double x) const { return static_cast<long>(std::floor(x / cell_)); }

    long torus_cells() const {
        constexpr double kPi = 3.14159265358979323846;
        return std::max<long>(3, static_cast<long>(std::ceil(2.0 * kPi / cell_)));
    }

    std::uint64_t pack_torus(const std::array<long, 4>& c, const std::array<long, 4>& o) const {
        const long n = torus_cells();
        std::uint64_t h = 0;
        for (int t = 0; t < 4; ++t) {
            long v = ((c[t] + o[t]) % n + n) % n;
            h = h * 1000003ull + static_cast<std::uint64_t>(v);
        }
        return h;
    }

    std::uint64_t pack_sphere(const std::array<long, 5>& c, const std::array<long, 5>& o) const {
        std::uint64_t h = 0;
        for (int t = 0; t < 5; ++t)
            h = h * 1000003ull + static_cast<std::uint64_t>(c[t] + o[t] + (1l << 20));
        return h;
    }

    std::uint64_t key_of(std::size_t i) const {
        if (torus_) {
            std::array<long, 4> c;
            for (int t = 0; t < 4; ++t) c[t] = cell_of(pts_[i][t]);
            return pack_torus(c, {0, 0, 0, 0});
        }
        std::array<long, 5> c;
        for (int t = 0; t < 5; ++t) c[t] = static_cast<long>(std::floor(emb_[i][t] / cell_));
        return pack_sphere(c, {0, 0, 0, 0, 0});
    }
};

} // namespace qcurv
