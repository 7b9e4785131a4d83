#include "evinet/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "evinet/errors.hpp"

namespace evinet {

void Volume3D::validate(const std::string& context) const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) {
            throw validation_error(context + ": dims must all be >= 1");
        }
        if (!(spacing_mm[a] > 0.0) || !std::isfinite(spacing_mm[a])) {
            throw validation_error(context + ": spacing must be positive and finite");
        }
    }
    if (values.size() != voxel_count()) {
        throw validation_error(context + ": value buffer holds " + std::to_string(values.size()) +
                               " entries for dims implying " + std::to_string(voxel_count()));
    }
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw validation_error(context + ": non-finite voxel value");
        }
    }
}

Volume3D window_normalize(const Volume3D& v, double width, double level) {
    if (!(width > 0.0) || !std::isfinite(width) || !std::isfinite(level)) {
        throw validation_error("window_normalize: width must be positive and finite");
    }
    const double lo = level - width / 2.0;
    Volume3D out = v;
    for (float& x : out.values) {
        double t = (static_cast<double>(x) - lo) / width;
        x = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
    return out;
}

namespace {

// Sample v at continuous source index (fx, fy, fz) with border clamp,
// using nested std::lerp so constants interpolate exactly.
double sample_trilinear(const Volume3D& v, double fx, double fy, double fz) {
    const auto clampf = [](double f, int n) { return std::clamp(f, 0.0, static_cast<double>(n - 1)); };
    fx = clampf(fx, v.dims[0]);
    fy = clampf(fy, v.dims[1]);
    fz = clampf(fz, v.dims[2]);
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
    const int x1 = std::min(x0 + 1, v.dims[0] - 1);
    const int y1 = std::min(y0 + 1, v.dims[1] - 1);
    const int z1 = std::min(z0 + 1, v.dims[2] - 1);
    const double tx = fx - x0, ty = fy - y0, tz = fz - z0;

    const double c00 = std::lerp<double>(v.at(x0, y0, z0), v.at(x1, y0, z0), tx);
    const double c10 = std::lerp<double>(v.at(x0, y1, z0), v.at(x1, y1, z0), tx);
    const double c01 = std::lerp<double>(v.at(x0, y0, z1), v.at(x1, y0, z1), tx);
    const double c11 = std::lerp<double>(v.at(x0, y1, z1), v.at(x1, y1, z1), tx);
    const double c0 = std::lerp(c00, c10, ty);
    const double c1 = std::lerp(c01, c11, ty);
    return std::lerp(c0, c1, tz);
}

} // namespace

Volume3D resample_isotropic(const Volume3D& v, double target_mm) {
    v.validate("resample_isotropic");
    if (!(target_mm > 0.0) || !std::isfinite(target_mm)) {
        throw validation_error("resample_isotropic: target spacing must be positive");
    }
    Volume3D out;
    for (int a = 0; a < 3; ++a) {
        const double extent = (v.dims[a] - 1) * v.spacing_mm[a];
        out.dims[a] = static_cast<int>(std::llround(extent / target_mm)) + 1;
        out.spacing_mm[a] = target_mm;
    }
    out.values.resize(out.voxel_count());

    const double sx = target_mm / v.spacing_mm[0];
    const double sy = target_mm / v.spacing_mm[1];
    const double sz = target_mm / v.spacing_mm[2];
    std::size_t idx = 0;
    for (int z = 0; z < out.dims[2]; ++z) {
        for (int y = 0; y < out.dims[1]; ++y) {
            for (int x = 0; x < out.dims[0]; ++x, ++idx) {
                out.values[idx] =
                    static_cast<float>(sample_trilinear(v, x * sx, y * sy, z * sz));
            }
        }
    }
    return out;
}

Box3D full_extent(const Volume3D& v) {
    return Box3D{{0, 0, 0}, {v.dims[0] - 1, v.dims[1] - 1, v.dims[2] - 1}};
}

Volume3D crop(const Volume3D& v, const Box3D& box, int pad_to_side) {
    v.validate("crop");
    if (pad_to_side < 1) {
        throw validation_error("crop: pad_to_side must be >= 1");
    }
    Box3D b = box;
    for (int a = 0; a < 3; ++a) {
        if (b.min_voxel[a] > b.max_voxel[a]) {
            throw validation_error("crop: box min exceeds max on axis " + std::to_string(a));
        }
        b.min_voxel[a] = std::max(b.min_voxel[a], 0);
        b.max_voxel[a] = std::min(b.max_voxel[a], v.dims[a] - 1);
        if (b.min_voxel[a] > b.max_voxel[a]) {
            throw validation_error("crop: box does not intersect the volume on axis " +
                                   std::to_string(a));
        }
    }

    Volume3D out;
    out.dims = {pad_to_side, pad_to_side, pad_to_side};
    out.spacing_mm = v.spacing_mm;
    out.values.assign(out.voxel_count(), 0.0f);

    // Shared origin shift per axis: where extracted voxel 0 lands in the cube
    // (negative means the extract is centre-cropped).
    std::array<int, 3> offset{};
    for (int a = 0; a < 3; ++a) {
        const int extent = b.max_voxel[a] - b.min_voxel[a] + 1;
        offset[a] = (pad_to_side - extent) / 2;
    }

    for (int z = 0; z < pad_to_side; ++z) {
        const int src_z = z - offset[2] + b.min_voxel[2];
        if (src_z < b.min_voxel[2] || src_z > b.max_voxel[2]) continue;
        for (int y = 0; y < pad_to_side; ++y) {
            const int src_y = y - offset[1] + b.min_voxel[1];
            if (src_y < b.min_voxel[1] || src_y > b.max_voxel[1]) continue;
            for (int x = 0; x < pad_to_side; ++x) {
                const int src_x = x - offset[0] + b.min_voxel[0];
                if (src_x < b.min_voxel[0] || src_x > b.max_voxel[0]) continue;
                out.at(x, y, z) = v.at(src_x, src_y, src_z);
            }
        }
    }
    return out;
}

void save_volume(const std::string& path, const Volume3D& v) {
    v.validate("save_volume");
    nlohmann::json desc;
    desc["dims"] = v.dims;
    desc["spacing_mm"] = v.spacing_mm;
    desc["dtype"] = "f32le";
    {
        std::ofstream js(path + ".json");
        if (!js) throw io_error("save_volume: cannot open " + path + ".json for writing");
        js << desc.dump(2) << "\n";
        if (!js) throw io_error("save_volume: failed writing " + path + ".json");
    }
    std::ofstream raw(path + ".raw", std::ios::binary);
    if (!raw) throw io_error("save_volume: cannot open " + path + ".raw for writing");
    raw.write(reinterpret_cast<const char*>(v.values.data()),
              static_cast<std::streamsize>(v.values.size() * sizeof(float)));
    if (!raw) throw io_error("save_volume: failed writing " + path + ".raw");
}

Volume3D load_volume(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw io_error("load_volume: cannot open " + path + ".json");
    nlohmann::json desc;
    try {
        js >> desc;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("load_volume: bad descriptor " + path + ".json: " + e.what());
    }
    Volume3D v;
    try {
        v.dims = desc.at("dims").get<std::array<int, 3>>();
        v.spacing_mm = desc.at("spacing_mm").get<std::array<double, 3>>();
        if (desc.at("dtype").get<std::string>() != "f32le") {
            throw validation_error("load_volume: unsupported dtype in " + path + ".json");
        }
    } catch (const nlohmann::json::exception& e) {
        throw io_error("load_volume: bad descriptor " + path + ".json: " + e.what());
    }
    std::ifstream raw(path + ".raw", std::ios::binary);
    if (!raw) throw io_error("load_volume: cannot open " + path + ".raw");
    v.values.resize(static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2]);
    raw.read(reinterpret_cast<char*>(v.values.data()),
             static_cast<std::streamsize>(v.values.size() * sizeof(float)));
    if (raw.gcount() != static_cast<std::streamsize>(v.values.size() * sizeof(float))) {
        throw io_error("load_volume: payload " + path + ".raw shorter than descriptor dims imply");
    }
    v.validate("load_volume(" + path + ")");
    return v;
}

} // namespace evinet
