#include "hasa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hasa/png_io.hpp"
#include "hasa/sdm.hpp"

namespace hasa {

namespace {

void require_pair(const LabelVolume& a, const LabelVolume& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
    }
    if (!a.is_binary() || !b.is_binary()) throw std::invalid_argument(std::string(what) + ": masks must be binary");
}

}  // namespace

double dice(std::span<const uint8_t> a, std::span<const uint8_t> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dice: shape mismatch");
    std::size_t inter = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] != 0, y = b[i] != 0;
        na += x;
        nb += y;
        inter += x && y;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double dice(const LabelVolume& a, const LabelVolume& b) {
    require_pair(a, b, "dice");
    return dice(std::span<const uint8_t>(a.values()), std::span<const uint8_t>(b.values()));
}

double volume_accuracy(std::size_t pred_voxels, std::size_t true_voxels) {
    if (true_voxels == 0) throw std::invalid_argument("volume_accuracy: truth is empty");
    const double vp = static_cast<double>(pred_voxels), vt = static_cast<double>(true_voxels);
    return std::max(0.0, 1.0 - std::fabs(vp - vt) / vt);
}

double volume_accuracy(const LabelVolume& pred, const LabelVolume& truth) {
    require_pair(pred, truth, "volume_accuracy");
    const std::size_t nt = truth.foreground_count();
    if (nt == 0) throw std::invalid_argument("volume_accuracy: truth is empty");
    const double vt = static_cast<double>(nt) * truth.spacing().voxel_volume();
    const double vp = static_cast<double>(pred.foreground_count()) * pred.spacing().voxel_volume();
    return std::max(0.0, 1.0 - std::fabs(vp - vt) / vt);
}

std::size_t EdgeErrorMap::error_count() const {
    std::size_t n = 0;
    for (auto c : histogram) n += c;
    return n;
}

double EdgeErrorMap::fraction_within(double d) const {
    const std::size_t total = error_count();
    if (total == 0) return 1.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < histogram.size() && static_cast<double>(k) <= d; ++k) n += histogram[k];
    return static_cast<double>(n) / static_cast<double>(total);
}

EdgeErrorMap edge_error_map(const LabelVolume& pred, const LabelVolume& truth, bool per_slice) {
    require_pair(pred, truth, "edge_error_map");
    const auto& s = truth.shape();
    EdgeErrorMap out{LabelVolume(s, truth.spacing()), LabelVolume(s, truth.spacing()), {}};
    bool any_error = false;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out.fp[i] = pred[i] && !truth[i];
        out.fn[i] = truth[i] && !pred[i];
        any_error = any_error || out.fp[i] || out.fn[i];
    }
    if (!any_error) return out;

    // A voxel with no truth boundary in reach (empty truth) is placed past every
    // finite distance; the volume diagonal bounds all real distances.
    const double far = std::ceil(std::sqrt(static_cast<double>(s.nx) * s.nx + static_cast<double>(s.ny) * s.ny +
                                           static_cast<double>(s.nz) * s.nz)) + 1.0;
    Volume3D dist(s, truth.spacing(), 0.0f);
    if (per_slice) {
        for (int z = 0; z < s.nz; ++z) {
            const Mask2D m = extract_slice(truth, z);
            const Image2D d = count_foreground(m) == 0 ? Image2D(s.nx, s.ny, static_cast<float>(-far))
                                                       : signed_distance(m, far);
            std::copy(d.values().begin(), d.values().end(), dist.slice_span(z).begin());
        }
    } else {
        dist = signed_distance_3d(truth, far);
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!out.fp[i] && !out.fn[i]) continue;
        const auto bin = static_cast<std::size_t>(std::ceil(std::fabs(static_cast<double>(dist[i])) - 1e-9));
        if (out.histogram.size() <= bin) out.histogram.resize(bin + 1, 0);
        ++out.histogram[bin];
    }
    return out;
}

void write_edge_overlay(const std::filesystem::path& path, const Volume3D& image, const EdgeErrorMap& map, int z) {
    const auto& s = image.shape();
    if (s != map.fp.shape()) throw std::invalid_argument("write_edge_overlay: image and maps differ in shape");
    if (z < 0 || z >= s.nz) throw std::out_of_range("write_edge_overlay: slice out of range");
    const Image2D sl = extract_slice(image, z);
    float lo = sl.values().front(), hi = lo;
    for (float v : sl.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::vector<uint8_t> rgb(s.slice_voxels() * 3);
    for (int y = 0; y < s.ny; ++y)
        for (int x = 0; x < s.nx; ++x) {
            const std::size_t p = sl.index(x, y) * 3;
            const auto g = static_cast<uint8_t>(std::lround((sl.at(x, y) - lo) * scale));
            std::array<uint8_t, 3> c{g, g, g};
            if (map.fp.at(x, y, z)) c = {255, 0, 255};
            if (map.fn.at(x, y, z)) c = {0, 255, 0};
            std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(p));
        }
    write_png_rgb(path, s.nx, s.ny, rgb);
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of an empty list");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::size_t> flag_outliers(const std::vector<double>& scores, double k) {
    if (scores.size() < 4) throw std::invalid_argument("flag_outliers: need at least 4 scores");
    if (!(k > 0.0)) throw std::invalid_argument("flag_outliers: k must be > 0");
    const double med = median(scores);
    std::vector<double> dev;
    dev.reserve(scores.size());
    for (double s : scores) dev.push_back(std::fabs(s - med));
    const double mad = median(dev);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (mad == 0.0 ? scores[i] != med : dev[i] / mad > k) out.push_back(i);
    }
    return out;
}

std::vector<ResultRow> results_table(const std::vector<EvalRecord>& records, bool pooled_vol_acc) {
    if (records.empty()) throw std::invalid_argument("results_table: no records");
    std::vector<std::string> order;
    std::map<std::string, std::vector<const EvalRecord*>> groups;
    for (const auto& r : records) {
        if (!groups.count(r.config)) order.push_back(r.config);
        groups[r.config].push_back(&r);
    }
    std::vector<ResultRow> rows;
    for (const auto& name : order) {
        const auto& g = groups[name];
        ResultRow row;
        row.config = name;
        row.subjects = g.size();
        const double n = static_cast<double>(g.size());
        std::size_t pred_sum = 0, true_sum = 0;
        for (const auto* r : g) {
            row.mean_dice += r->dice / n;
            row.mean_vol_acc += r->vol_acc / n;
            pred_sum += r->pred_volume_voxels;
            true_sum += r->true_volume_voxels;
        }
        for (const auto* r : g) {
            row.std_dice += (r->dice - row.mean_dice) * (r->dice - row.mean_dice);
            row.std_vol_acc += (r->vol_acc - row.mean_vol_acc) * (r->vol_acc - row.mean_vol_acc);
        }
        row.std_dice = g.size() > 1 ? std::sqrt(row.std_dice / (n - 1)) : 0.0;
        row.std_vol_acc = g.size() > 1 ? std::sqrt(row.std_vol_acc / (n - 1)) : 0.0;
        if (pooled_vol_acc) row.mean_vol_acc = volume_accuracy(pred_sum, true_sum);
        rows.push_back(row);
    }
    return rows;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed;
    os << "config,subjects,mean_dice,std_dice,mean_vol_acc,std_vol_acc\n";
    for (const auto& r : rows)
        os << r.config << ',' << r.subjects << ',' << r.mean_dice << ',' << r.std_dice << ',' << r.mean_vol_acc << ','
           << r.std_vol_acc << '\n';
    return os.str();
}

std::string results_text(const std::vector<ResultRow>& rows) {
    std::size_t w = 6;
    for (const auto& r : rows) w = std::max(w, r.config.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(w)) << "config" << std::right << std::setw(10) << "subjects"
       << std::setw(14) << "DICE" << std::setw(14) << "Vol Acc" << '\n';
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
        std::ostringstream d, v;
        d << std::fixed << std::setprecision(4) << r.mean_dice << "±" << std::setprecision(3) << r.std_dice;
        v << std::fixed << std::setprecision(4) << r.mean_vol_acc << "±" << std::setprecision(3) << r.std_vol_acc;
        os << std::left << std::setw(static_cast<int>(w)) << r.config << std::right << std::setw(10) << r.subjects
           << std::setw(15) << d.str() << std::setw(15) << v.str() << '\n';
    }
    return os.str();
}

std::string records_csv(const std::vector<EvalRecord>& records) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed;
    os << "config,subject_id,dice,vol_acc,pred_volume_voxels,true_volume_voxels,edge_fp_count,edge_fn_count\n";
    for (const auto& r : records)
        os << r.config << ',' << r.subject_id << ',' << r.dice << ',' << r.vol_acc << ',' << r.pred_volume_voxels
           << ',' << r.true_volume_voxels << ',' << r.edge_fp_count << ',' << r.edge_fn_count << '\n';
    return os.str();
}

}  // namespace hasa
