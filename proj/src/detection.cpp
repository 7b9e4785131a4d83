#include "evinet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evinet/csv.hpp"
#include "evinet/errors.hpp"

namespace evinet {

namespace {

void validate_box(const Box2D& b, const std::string& context) {
    if (!(b.min_x <= b.max_x) || !(b.min_y <= b.max_y)) {
        throw validation_error(context + ": box min exceeds max");
    }
    if (b.confidence && !(*b.confidence >= 0.0 && *b.confidence <= 1.0)) {
        throw validation_error(context + ": confidence outside [0,1]");
    }
}

double overlap_1d(double a_lo, double a_hi, double b_lo, double b_hi) {
    return std::max(0.0, std::min(a_hi, b_hi) - std::max(a_lo, b_lo));
}

} // namespace

Box3D merge_slices(const std::vector<Box2D>& boxes) {
    if (boxes.empty()) {
        throw validation_error("merge_slices: no boxes to merge");
    }
    double min_x = boxes[0].min_x, min_y = boxes[0].min_y;
    double max_x = boxes[0].max_x, max_y = boxes[0].max_y;
    int min_z = boxes[0].slice_z, max_z = boxes[0].slice_z;
    for (const auto& b : boxes) {
        validate_box(b, "merge_slices");
        min_x = std::min(min_x, b.min_x);
        min_y = std::min(min_y, b.min_y);
        max_x = std::max(max_x, b.max_x);
        max_y = std::max(max_y, b.max_y);
        min_z = std::min(min_z, b.slice_z);
        max_z = std::max(max_z, b.slice_z);
    }
    Box3D out;
    out.min_voxel = {static_cast<int>(std::floor(min_x)), static_cast<int>(std::floor(min_y)), min_z};
    out.max_voxel = {static_cast<int>(std::ceil(max_x)), static_cast<int>(std::ceil(max_y)), max_z};
    return out;
}

double iou(const Box2D& a, const Box2D& b) {
    validate_box(a, "iou");
    validate_box(b, "iou");
    const double inter = overlap_1d(a.min_x, a.max_x, b.min_x, b.max_x) *
                         overlap_1d(a.min_y, a.max_y, b.min_y, b.max_y);
    const double area_a = (a.max_x - a.min_x) * (a.max_y - a.min_y);
    const double area_b = (b.max_x - b.min_x) * (b.max_y - b.min_y);
    const double uni = area_a + area_b - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double iou(const Box3D& a, const Box3D& b) {
    double inter = 1.0, vol_a = 1.0, vol_b = 1.0;
    for (int ax = 0; ax < 3; ++ax) {
        if (a.min_voxel[ax] > a.max_voxel[ax] || b.min_voxel[ax] > b.max_voxel[ax]) {
            throw validation_error("iou: box min exceeds max");
        }
        inter *= overlap_1d(a.min_voxel[ax], a.max_voxel[ax], b.min_voxel[ax], b.max_voxel[ax]);
        vol_a *= a.max_voxel[ax] - a.min_voxel[ax];
        vol_b *= b.max_voxel[ax] - b.min_voxel[ax];
    }
    const double uni = vol_a + vol_b - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double average_precision(const std::vector<Box2D>& predictions,
                         const std::vector<Box2D>& truths,
                         double iou_threshold) {
    if (truths.empty()) {
        throw validation_error("average_precision: no ground truths; AP is undefined");
    }
    for (const auto& t : truths) validate_box(t, "average_precision(truth)");
    for (const auto& p : predictions) {
        validate_box(p, "average_precision(prediction)");
        if (!p.confidence) {
            throw validation_error("average_precision: prediction without confidence");
        }
    }
    if (predictions.empty()) return 0.0;

    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return *predictions[a].confidence > *predictions[b].confidence;
    });

    // Greedy matching: each prediction takes the best still-unmatched truth.
    std::vector<bool> truth_used(truths.size(), false);
    std::vector<int> is_tp(predictions.size(), 0);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const Box2D& p = predictions[order[rank]];
        double best_iou = 0.0;
        std::size_t best_t = truths.size();
        for (std::size_t t = 0; t < truths.size(); ++t) {
            if (truth_used[t]) continue;
            const double o = iou(p, truths[t]);
            if (o > best_iou) {
                best_iou = o;
                best_t = t;
            }
        }
        if (best_t < truths.size() && best_iou >= iou_threshold) {
            truth_used[best_t] = true;
            is_tp[rank] = 1;
        }
    }

    // Precision/recall after each prediction, then all-point interpolation:
    // AP = sum over recall increments of the max precision at recall >= r.
    const double n_truth = static_cast<double>(truths.size());
    std::vector<double> precision(order.size()), recall(order.size());
    int tp = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        tp += is_tp[i];
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / n_truth;
    }
    for (std::size_t i = order.size() - 1; i-- > 0;) {
        precision[i] = std::max(precision[i], precision[i + 1]);
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (recall[i] > prev_recall) {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    return ap;
}

std::vector<Box2D> load_boxes(const std::string& path) {
    CsvTable t = read_csv(path);
    const std::size_t cz = t.column("slice_z", path);
    const std::size_t cx0 = t.column("x_min", path);
    const std::size_t cy0 = t.column("y_min", path);
    const std::size_t cx1 = t.column("x_max", path);
    const std::size_t cy1 = t.column("y_max", path);
    std::size_t cconf = t.header.size();
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == "confidence") cconf = i;
    }
    std::vector<Box2D> boxes;
    boxes.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        Box2D b;
        try {
            b.slice_z = std::stoi(row[cz]);
            b.min_x = std::stod(row[cx0]);
            b.min_y = std::stod(row[cy0]);
            b.max_x = std::stod(row[cx1]);
            b.max_y = std::stod(row[cy1]);
            if (cconf < t.header.size() && !row[cconf].empty()) {
                b.confidence = std::stod(row[cconf]);
            }
        } catch (const std::exception&) {
            throw validation_error(path + ": row " + std::to_string(r + 1) +
                                   ": unparseable numeric field");
        }
        validate_box(b, path + ": row " + std::to_string(r + 1));
        boxes.push_back(b);
    }
    return boxes;
}

void save_boxes(const std::string& path, const std::vector<Box2D>& boxes) {
    const bool any_conf =
        std::any_of(boxes.begin(), boxes.end(), [](const Box2D& b) { return b.confidence.has_value(); });
    CsvTable t;
    t.header = {"slice_z", "x_min", "y_min", "x_max", "y_max"};
    if (any_conf) t.header.push_back("confidence");
    for (const auto& b : boxes) {
        std::vector<std::string> row = {
            std::to_string(b.slice_z),
            std::to_string(b.min_x), std::to_string(b.min_y),
            std::to_string(b.max_x), std::to_string(b.max_y),
        };
        if (any_conf) row.push_back(b.confidence ? std::to_string(*b.confidence) : "");
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

} // namespace evinet
