#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace evinet {

// Dense 3D scalar grid with physical voxel spacing in millimetres.
// Values are stored row-major with z outermost: index = (z*ny + y)*nx + x.
struct Volume3D {
    std::array<int, 3> dims{0, 0, 0};            // (nx, ny, nz)
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
    std::vector<float> values;

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
    }
    float at(int x, int y, int z) const { return values[index(x, y, z)]; }
    float& at(int x, int y, int z) { return values[index(x, y, z)]; }

    // Throws validation_error when dims/spacing/value-buffer are inconsistent
    // or any value is non-finite.
    void validate(const std::string& context) const;
};

// Inclusive voxel-index box.
struct Box3D {
    std::array<int, 3> min_voxel{0, 0, 0};
    std::array<int, 3> max_voxel{0, 0, 0};
};

// Clamps values to [level - width/2, level + width/2] and maps that range
// affinely onto [0,1]. The defaults follow the CT soft-tissue window.
Volume3D window_normalize(const Volume3D& v, double width = 300.0, double level = 40.0);

// Resamples onto an isotropic grid of spacing target_mm, voxel centres at
// i*target_mm from the shared origin. Output dims are
// round((dims_i - 1) * spacing_i / target) + 1 per axis; values are
// trilinearly interpolated with border clamp.
Volume3D resample_isotropic(const Volume3D& v, double target_mm = 1.0);

// Extracts the inclusive box (clipped to the volume bounds) and centre-pads
// with zeros, or centre-crops, to a cube of side pad_to_side.
Volume3D crop(const Volume3D& v, const Box3D& box, int pad_to_side);

// Box spanning the full extent of a volume.
Box3D full_extent(const Volume3D& v);

// Volume files are a pair: <path>.json sidecar descriptor with fields
// "dims", "spacing_mm" and "dtype" (always "f32le"), and <path>.raw holding
// the little-endian float payload in storage order. `path` is the stem.
void save_volume(const std::string& path, const Volume3D& v);
Volume3D load_volume(const std::string& path);

} // namespace evinet
