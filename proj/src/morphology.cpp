#include "hasa/morphology.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "hasa/distance.hpp"

namespace hasa {

Mask2D dilate_disk(const Mask2D& m, double radius) {
    require_binary(m, "dilate_disk");
    if (radius <= 0.0) return m;
    const auto d2 = squared_distance_to_seeds(m.values(), m.nx(), m.ny());
    const double r2 = radius * radius;
    Mask2D out(m.nx(), m.ny(), uint8_t{0});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d2[i] <= r2 ? 1 : 0;
    return out;
}

Mask2D erode_disk(const Mask2D& m, double radius) {
    require_binary(m, "erode_disk");
    if (radius <= 0.0) return m;
    // Pad by ceil(radius) so the slice border behaves as background.
    const int pad = static_cast<int>(std::ceil(radius));
    const int px = m.nx() + 2 * pad;
    const int py = m.ny() + 2 * pad;
    std::vector<uint8_t> bg(static_cast<std::size_t>(px) * static_cast<std::size_t>(py), 1);
    for (int y = 0; y < m.ny(); ++y)
        for (int x = 0; x < m.nx(); ++x)
            bg[static_cast<std::size_t>(y + pad) * static_cast<std::size_t>(px) + static_cast<std::size_t>(x + pad)] =
                m.at(x, y) ? 0 : 1;
    const auto d2 = squared_distance_to_seeds(bg, px, py);
    const double r2 = radius * radius;
    Mask2D out(m.nx(), m.ny(), uint8_t{0});
    for (int y = 0; y < m.ny(); ++y)
        for (int x = 0; x < m.nx(); ++x)
            out.at(x, y) =
                d2[static_cast<std::size_t>(y + pad) * static_cast<std::size_t>(px) + static_cast<std::size_t>(x + pad)] >
                        r2
                    ? 1
                    : 0;
    return out;
}

Mask2D boundary_voxels(const Mask2D& m) {
    Mask2D out(m.nx(), m.ny(), uint8_t{0});
    static constexpr std::array<std::array<int, 2>, 4> kN4{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    for (int y = 0; y < m.ny(); ++y) {
        for (int x = 0; x < m.nx(); ++x) {
            if (!m.at(x, y)) continue;
            for (auto [dx, dy] : kN4) {
                const int qx = x + dx;
                const int qy = y + dy;
                if (m.in_bounds(qx, qy) && !m.at(qx, qy)) {
                    out.at(x, y) = 1;
                    break;
                }
            }
        }
    }
    return out;
}

ComponentLabeling label_components(const Mask2D& m) {
    require_binary(m, "label_components");
    ComponentLabeling out{Grid2D<int>(m.nx(), m.ny(), 0), {}};
    std::vector<std::pair<int, int>> stack;
    int next = 0;
    for (int y = 0; y < m.ny(); ++y) {
        for (int x = 0; x < m.nx(); ++x) {
            if (!m.at(x, y) || out.labels.at(x, y) != 0) continue;
            ++next;
            Component c;
            c.label = next;
            c.x_min = c.x_max = x;
            c.y_min = c.y_max = y;
            double sx = 0.0, sy = 0.0;
            stack.clear();
            stack.emplace_back(x, y);
            out.labels.at(x, y) = next;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                ++c.area;
                sx += cx;
                sy += cy;
                c.x_min = std::min(c.x_min, cx);
                c.x_max = std::max(c.x_max, cx);
                c.y_min = std::min(c.y_min, cy);
                c.y_max = std::max(c.y_max, cy);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int qx = cx + dx;
                        const int qy = cy + dy;
                        if ((dx || dy) && m.in_bounds(qx, qy) && m.at(qx, qy) && out.labels.at(qx, qy) == 0) {
                            out.labels.at(qx, qy) = next;
                            stack.emplace_back(qx, qy);
                        }
                    }
                }
            }
            c.centroid_x = sx / static_cast<double>(c.area);
            c.centroid_y = sy / static_cast<double>(c.area);
            out.components.push_back(c);
        }
    }
    return out;
}

std::size_t count_components_3d(const LabelVolume& v) {
    const auto& s = v.shape();
    std::vector<uint8_t> seen(v.size(), 0);
    std::vector<std::array<int, 3>> stack;
    std::size_t count = 0;
    static constexpr std::array<std::array<int, 3>, 6> kN6{
        {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
    for (int z = 0; z < s.nz; ++z)
        for (int y = 0; y < s.ny; ++y)
            for (int x = 0; x < s.nx; ++x) {
                const auto i = v.index(x, y, z);
                if (!v[i] || seen[i]) continue;
                ++count;
                seen[i] = 1;
                stack.push_back({x, y, z});
                while (!stack.empty()) {
                    auto p = stack.back();
                    stack.pop_back();
                    for (const auto& d : kN6) {
                        const int qx = p[0] + d[0], qy = p[1] + d[1], qz = p[2] + d[2];
                        if (!v.in_bounds(qx, qy, qz)) continue;
                        const auto j = v.index(qx, qy, qz);
                        if (v[j] && !seen[j]) {
                            seen[j] = 1;
                            stack.push_back({qx, qy, qz});
                        }
                    }
                }
            }
    return count;
}

}  // namespace hasa
