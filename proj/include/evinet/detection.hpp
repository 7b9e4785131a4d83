#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evinet/volume.hpp"

namespace evinet {

// Axis-aligned detection box on one axial slice. Coordinates are continuous
// pixel positions; confidence is present only for scored detections.
struct Box2D {
    int slice_z = 0;
    double min_x = 0.0, min_y = 0.0;
    double max_x = 0.0, max_y = 0.0;
    std::optional<double> confidence;
};

// Union of per-slice boxes into one volume of interest: the merged box spans
// [min z, max z] and the componentwise union of the 2D extents. Fractional
// 2D coordinates are widened outward (floor/ceil) to whole voxels.
Box3D merge_slices(const std::vector<Box2D>& boxes);

// Intersection over union with continuous extents (max - min per axis, no
// +1 convention). Disjoint or degenerate unions give 0.
double iou(const Box2D& a, const Box2D& b);
double iou(const Box3D& a, const Box3D& b);

// Area under the precision-recall curve with all-point interpolation.
// Predictions must carry confidences; they are matched greedily by
// descending confidence, each ground truth consumed at most once, a match
// requiring IoU >= iou_threshold. Throws validation_error when truths is
// empty.
double average_precision(const std::vector<Box2D>& predictions,
                         const std::vector<Box2D>& truths,
                         double iou_threshold = 0.5);

// Boxes file: CSV with header slice_z,x_min,y_min,x_max,y_max[,confidence].
std::vector<Box2D> load_boxes(const std::string& path);
void save_boxes(const std::string& path, const std::vector<Box2D>& boxes);

} // namespace evinet
