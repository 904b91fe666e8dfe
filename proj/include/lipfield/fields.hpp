#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lipfield/errors.hpp"
#include "lipfield/tensor.hpp"

namespace lipfield {

enum class FieldKind { Circle, Star, Polygon, Torus3d, DoubleTorus3d, RasterGrid };
enum class FieldRepr { Sdf, Occupancy };

inline std::string to_string(FieldKind k) {
    switch (k) {
        case FieldKind::Circle: return "circle";
        case FieldKind::Star: return "star";
        case FieldKind::Polygon: return "polygon";
        case FieldKind::Torus3d: return "torus3d";
        case FieldKind::DoubleTorus3d: return "double_torus3d";
        case FieldKind::RasterGrid: return "raster_grid";
    }
    return "?";
}

struct RasterGrid {
    std::size_t nx = 0, ny = 0;
    double spacing = 1.0;
    std::array<double, 2> origin{0.0, 0.0};
    std::vector<double> values; // values[iy * nx + ix]

    double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }
};

struct TorusSpec {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    double major_radius = 0.25;
    double minor_radius = 0.08;
};

/// One ground-truth implicit shape together with the latent code it is pinned
/// to during training. Construct through the factories below, which validate
/// the geometry.
struct FieldSpec {
    FieldKind kind = FieldKind::Circle;
    FieldRepr representation = FieldRepr::Sdf;
    DenseVector latent_target;

    std::array<double, 2> center{0.5, 0.5};
    double radius = 0.25;
    double r_outer = 0.35, r_inner = 0.15;
    int star_points = 5;
    std::vector<std::array<double, 2>> vertices; // closed implicitly
    TorusSpec torus_a, torus_b;
    RasterGrid raster;

    std::size_t spatial_dim() const {
        return (kind == FieldKind::Torus3d || kind == FieldKind::DoubleTorus3d) ? 3 : 2;
    }
};

namespace detail {

inline bool segments_intersect(const std::array<double, 2>& a, const std::array<double, 2>& b,
                               const std::array<double, 2>& c, const std::array<double, 2>& d) {
    auto orient = [](const std::array<double, 2>& p, const std::array<double, 2>& q,
                     const std::array<double, 2>& r) {
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    };
    const double o1 = orient(a, b, c), o2 = orient(a, b, d);
    const double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0));
}

inline void validate_polygon(const std::vector<std::array<double, 2>>& v) {
    if (v.size() < 3) throw DomainError("polygon needs at least 3 vertices");
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            // skip edges sharing a vertex (adjacent, incl. the closing edge)
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]))
                throw DomainError("polygon is self-intersecting");
        }
    }
}

inline double polygon_signed_distance(const std::vector<std::array<double, 2>>& v, double px, double py) {
    const std::size_t n = v.size();
    double d2 = std::numeric_limits<double>::infinity();
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double x0 = v[j][0], y0 = v[j][1], x1 = v[i][0], y1 = v[i][1];
        // distance to segment j->i
        const double ex = x1 - x0, ey = y1 - y0;
        const double wx = px - x0, wy = py - y0;
        const double len2 = ex * ex + ey * ey;
        double s = len2 > 0.0 ? (wx * ex + wy * ey) / len2 : 0.0;
        s = std::clamp(s, 0.0, 1.0);
        const double dx = wx - s * ex, dy = wy - s * ey;
        d2 = std::min(d2, dx * dx + dy * dy);
        // even-odd crossing
        if ((y0 > py) != (y1 > py)) {
            const double xcross = x0 + (py - y0) / (y1 - y0) * (x1 - x0);
            if (px < xcross) inside = !inside;
        }
    }
    const double d = std::sqrt(d2);
    return inside ? -d : d;
}

inline double torus_signed_distance(const TorusSpec& t, double px, double py, double pz) {
    const double qx = std::hypot(px - t.center[0], py - t.center[1]) - t.major_radius;
    const double qz = pz - t.center[2];
    return std::hypot(qx, qz) - t.minor_radius;
}

inline double raster_bilinear(const RasterGrid& g, double px, double py) {
    if (g.nx < 2 || g.ny < 2) throw DimensionError("raster grid must be at least 2x2");
    double fx = (px - g.origin[0]) / g.spacing;
    double fy = (py - g.origin[1]) / g.spacing;
    fx = std::clamp(fx, 0.0, static_cast<double>(g.nx - 1));
    fy = std::clamp(fy, 0.0, static_cast<double>(g.ny - 1));
    const std::size_t ix = std::min(static_cast<std::size_t>(fx), g.nx - 2);
    const std::size_t iy = std::min(static_cast<std::size_t>(fy), g.ny - 2);
    const double ax = fx - static_cast<double>(ix);
    const double ay = fy - static_cast<double>(iy);
    const double v00 = g.at(ix, iy), v10 = g.at(ix + 1, iy);
    const double v01 = g.at(ix, iy + 1), v11 = g.at(ix + 1, iy + 1);
    return (1 - ax) * (1 - ay) * v00 + ax * (1 - ay) * v10 + (1 - ax) * ay * v01 + ax * ay * v11;
}

} // namespace detail

inline std::vector<std::array<double, 2>> star_vertices(std::array<double, 2> center, double r_outer,
                                                        double r_inner, int points) {
    std::vector<std::array<double, 2>> v;
    v.reserve(2 * static_cast<std::size_t>(points));
    for (int k = 0; k < 2 * points; ++k) {
        const double r = (k % 2 == 0) ? r_outer : r_inner;
        const double a = M_PI / 2.0 + M_PI * static_cast<double>(k) / static_cast<double>(points);
        v.push_back({center[0] + r * std::cos(a), center[1] + r * std::sin(a)});
    }
    return v;
}

inline FieldSpec make_circle(std::array<double, 2> center, double radius, DenseVector latent,
                             FieldRepr repr = FieldRepr::Sdf) {
    if (!(radius > 0.0)) throw DomainError("circle radius must be positive");
    FieldSpec f;
    f.kind = FieldKind::Circle;
    f.representation = repr;
    f.center = center;
    f.radius = radius;
    f.latent_target = std::move(latent);
    return f;
}

inline FieldSpec make_star(std::array<double, 2> center, double r_outer, double r_inner, int points,
                           DenseVector latent, FieldRepr repr = FieldRepr::Sdf) {
    if (!(r_outer > 0.0) || !(r_inner > 0.0)) throw DomainError("star radii must be positive");
    if (points < 3) throw DomainError("star needs at least 3 points");
    FieldSpec f;
    f.kind = FieldKind::Star;
    f.representation = repr;
    f.center = center;
    f.r_outer = r_outer;
    f.r_inner = r_inner;
    f.star_points = points;
    f.vertices = star_vertices(center, r_outer, r_inner, points);
    detail::validate_polygon(f.vertices);
    f.latent_target = std::move(latent);
    return f;
}

inline FieldSpec make_polygon(std::vector<std::array<double, 2>> vertices, DenseVector latent,
                              FieldRepr repr = FieldRepr::Sdf) {
    detail::validate_polygon(vertices);
    FieldSpec f;
    f.kind = FieldKind::Polygon;
    f.representation = repr;
    f.vertices = std::move(vertices);
    f.latent_target = std::move(latent);
    return f;
}

inline FieldSpec make_torus(TorusSpec t, DenseVector latent, FieldRepr repr = FieldRepr::Sdf) {
    if (!(t.major_radius > 0.0) || !(t.minor_radius > 0.0)) throw DomainError("torus radii must be positive");
    FieldSpec f;
    f.kind = FieldKind::Torus3d;
    f.representation = repr;
    f.torus_a = t;
    f.latent_target = std::move(latent);
    return f;
}

/// Min-union of two tori: exact zero set, approximate distances off-surface.
inline FieldSpec make_double_torus(TorusSpec a, TorusSpec b, DenseVector latent,
                                   FieldRepr repr = FieldRepr::Sdf) {
    if (!(a.major_radius > 0.0) || !(a.minor_radius > 0.0) || !(b.major_radius > 0.0) ||
        !(b.minor_radius > 0.0))
        throw DomainError("torus radii must be positive");
    FieldSpec f;
    f.kind = FieldKind::DoubleTorus3d;
    f.representation = repr;
    f.torus_a = a;
    f.torus_b = b;
    f.latent_target = std::move(latent);
    return f;
}

inline FieldSpec make_raster(RasterGrid grid, DenseVector latent, FieldRepr repr = FieldRepr::Sdf) {
    if (!(grid.spacing > 0.0)) throw DomainError("raster spacing must be positive");
    if (grid.values.size() != grid.nx * grid.ny) throw DimensionError("raster value count mismatch");
    FieldSpec f;
    f.kind = FieldKind::RasterGrid;
    f.representation = repr;
    f.raster = std::move(grid);
    f.latent_target = std::move(latent);
    return f;
}

/// Signed distance of the underlying geometry regardless of representation.
inline double signed_distance(const FieldSpec& f, const DenseVector& p) {
    if (p.size() != f.spatial_dim())
        throw DimensionError("eval_field: point dimension " + std::to_string(p.size()) +
                             " does not match field dimension " + std::to_string(f.spatial_dim()));
    switch (f.kind) {
        case FieldKind::Circle:
            return std::hypot(p[0] - f.center[0], p[1] - f.center[1]) - f.radius;
        case FieldKind::Star:
        case FieldKind::Polygon:
            return detail::polygon_signed_distance(f.vertices, p[0], p[1]);
        case FieldKind::Torus3d:
            return detail::torus_signed_distance(f.torus_a, p[0], p[1], p[2]);
        case FieldKind::DoubleTorus3d:
            return std::min(detail::torus_signed_distance(f.torus_a, p[0], p[1], p[2]),
                            detail::torus_signed_distance(f.torus_b, p[0], p[1], p[2]));
        case FieldKind::RasterGrid:
            return detail::raster_bilinear(f.raster, p[0], p[1]);
    }
    throw DomainError("eval_field: unknown kind");
}

/// SDF fields return the signed distance; occupancy fields return the inside
/// indicator (1 where sdf <= 0).
inline double eval_field(const FieldSpec& f, const DenseVector& p) {
    const double sd = signed_distance(f, p);
    return f.representation == FieldRepr::Occupancy ? (sd <= 0.0 ? 1.0 : 0.0) : sd;
}

struct SamplePlan {
    std::size_t n_total = 4096;
    double frac_surface = 0.4;
    double frac_near = 0.4;
    double frac_uniform = 0.2;
    double near_sigma = 0.01;
    std::vector<std::array<double, 2>> bbox; // per-axis [lo, hi]; empty means unit box
    std::uint64_t seed = 0;

    void validate() const {
        if (frac_surface < 0 || frac_near < 0 || frac_uniform < 0)
            throw ConfigError("sample plan fractions must be nonnegative");
        if (std::abs(frac_surface + frac_near + frac_uniform - 1.0) > 1e-9)
            throw ConfigError("sample plan fractions must sum to 1");
        for (const auto& ab : bbox)
            if (!(ab[0] < ab[1])) throw ConfigError("sample plan bbox must have lo < hi per axis");
    }
};

struct Sample {
    DenseVector x;
    DenseVector t;
    double target = 0.0;
};

using TrainingSet = std::vector<Sample>;

namespace detail {

inline DenseVector sdf_gradient_fd(const FieldSpec& f, const DenseVector& p, double h = 1e-5) {
    DenseVector g(p.size());
    DenseVector q = p;
    for (std::size_t i = 0; i < p.size(); ++i) {
        q[i] = p[i] + h;
        const double fp = signed_distance(f, q);
        q[i] = p[i] - h;
        const double fm = signed_distance(f, q);
        q[i] = p[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Projects a random start onto the zero set: Newton steps on the signed
/// distance with a bisection fallback once a sign change brackets the surface.
inline bool project_to_surface(const FieldSpec& f, const std::vector<std::array<double, 2>>& box,
                               Rng& rng, double tol, DenseVector& out) {
    const std::size_t d = f.spatial_dim();
    DenseVector p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = rng.uniform(box[i][0], box[i][1]);

    DenseVector prev = p;
    double prev_sd = signed_distance(f, p);
    bool have_bracket = false;
    DenseVector blo, bhi; // bracket endpoints with opposite signs

    for (int it = 0; it < 30; ++it) {
        const double sd = signed_distance(f, p);
        if (std::abs(sd) < tol) {
            bool in_box = true;
            for (std::size_t i = 0; i < d; ++i)
                if (p[i] < box[i][0] || p[i] > box[i][1]) in_box = false;
            if (in_box) {
                out = p;
                return true;
            }
            return false;
        }
        if (!have_bracket && sd * prev_sd < 0.0) {
            blo = prev;
            bhi = p;
            have_bracket = true;
        }
        prev = p;
        prev_sd = sd;
        DenseVector g = sdf_gradient_fd(f, p);
        double g2 = 0.0;
        for (double e : g) g2 += e * e;
        if (g2 < 1e-12) break;
        for (std::size_t i = 0; i < d; ++i) p[i] -= sd * g[i] / g2;
    }

    if (have_bracket) {
        double lo_sd = signed_distance(f, blo);
        for (int it = 0; it < 80; ++it) {
            DenseVector mid(d);
            for (std::size_t i = 0; i < d; ++i) mid[i] = 0.5 * (blo[i] + bhi[i]);
            const double m_sd = signed_distance(f, mid);
            if (std::abs(m_sd) < tol) {
                bool in_box = true;
                for (std::size_t i = 0; i < d; ++i)
                    if (mid[i] < box[i][0] || mid[i] > box[i][1]) in_box = false;
                if (!in_box) return false;
                out = mid;
                return true;
            }
            if (m_sd * lo_sd < 0.0) {
                bhi = mid;
            } else {
                blo = mid;
                lo_sd = m_sd;
            }
        }
    }
    return false;
}

} // namespace detail

/// Surface points satisfy |sdf| < 1e-6; near-surface points are surface points
/// with a Gaussian offset of scale near_sigma, clamped into the box; the rest
/// are uniform over the box. Deterministic per plan seed.
inline TrainingSet sample_training_points(const FieldSpec& spec, const SamplePlan& plan) {
    plan.validate();
    const std::size_t d = spec.spatial_dim();
    std::vector<std::array<double, 2>> box = plan.bbox;
    if (box.empty()) box.assign(d, {0.0, 1.0});
    if (box.size() != d) throw DimensionError("sample plan bbox dimension mismatch");

    const auto n_surface =
        static_cast<std::size_t>(std::llround(plan.frac_surface * static_cast<double>(plan.n_total)));
    const auto n_near =
        static_cast<std::size_t>(std::llround(plan.frac_near * static_cast<double>(plan.n_total)));
    if (n_surface + n_near > plan.n_total) throw ConfigError("sample plan fractions overflow n_total");
    const std::size_t n_uniform = plan.n_total - n_surface - n_near;

    Rng rng(plan.seed);
    constexpr double surface_tol = 1e-6;
    constexpr int max_restarts = 200;

    auto surface_point = [&](DenseVector& out) {
        for (int attempt = 0; attempt < max_restarts; ++attempt)
            if (detail::project_to_surface(spec, box, rng, surface_tol, out)) return;
        throw SamplingError("could not find the field's zero set inside the bounding box");
    };

    TrainingSet set;
    set.reserve(plan.n_total);
    DenseVector p(d);
    for (std::size_t i = 0; i < n_surface; ++i) {
        surface_point(p);
        set.push_back({p, spec.latent_target, eval_field(spec, p)});
    }
    for (std::size_t i = 0; i < n_near; ++i) {
        surface_point(p);
        for (std::size_t k = 0; k < d; ++k)
            p[k] = std::clamp(p[k] + plan.near_sigma * rng.normal(), box[k][0], box[k][1]);
        set.push_back({p, spec.latent_target, eval_field(spec, p)});
    }
    for (std::size_t i = 0; i < n_uniform; ++i) {
        for (std::size_t k = 0; k < d; ++k) p[k] = rng.uniform(box[k][0], box[k][1]);
        set.push_back({p, spec.latent_target, eval_field(spec, p)});
    }
    return set;
}

// ---------------------------------------------------------------------------
// IDX image files (big-endian, as published for MNIST) and the bitmap-to-SDF
// conversion feeding the raster experiments.
// ---------------------------------------------------------------------------

struct ByteImage {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> pixels; // pixels[y * width + x]
};

struct IdxData {
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> data;

    std::size_t image_count() const { return shape.size() == 3 ? shape[0] : 0; }
    ByteImage image(std::size_t i) const {
        if (shape.size() != 3 || i >= shape[0]) throw ContractError("IdxData::image: not a 3-D image set");
        ByteImage img;
        img.height = shape[1];
        img.width = shape[2];
        const std::size_t n = img.width * img.height;
        img.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(i * n),
                          data.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
        return img;
    }
};

/// Parses an IDX byte buffer (unsigned-byte element type). Malformed input
/// raises ParseError carrying the byte offset of the problem.
inline IdxData parse_idx(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw ParseError("IDX header truncated", bytes.size());
    if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("bad IDX magic", bytes[0] != 0 ? 0 : 1);
    const std::uint8_t type_code = bytes[2];
    if (type_code != 0x08) throw ParseError("unsupported IDX type code (only unsigned byte)", 2);
    const std::size_t ndims = bytes[3];
    if (ndims == 0 || ndims > 4) throw ParseError("unsupported IDX dimension count", 3);
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw ParseError("IDX dimension table truncated", bytes.size());

    IdxData out;
    std::size_t total = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const std::size_t at = 4 + 4 * i;
        const std::size_t dim = (static_cast<std::size_t>(bytes[at]) << 24) |
                                (static_cast<std::size_t>(bytes[at + 1]) << 16) |
                                (static_cast<std::size_t>(bytes[at + 2]) << 8) |
                                static_cast<std::size_t>(bytes[at + 3]);
        out.shape.push_back(dim);
        total *= dim;
    }
    if (bytes.size() < header + total) throw ParseError("IDX payload truncated", bytes.size());
    if (bytes.size() > header + total) throw ParseError("IDX payload longer than declared", header + total);
    out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
    return out;
}

namespace detail {

/// 1-D squared Euclidean distance transform (lower envelope of parabolas).
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const std::size_t n = f.size();
    d.assign(n, 0.0);
    std::vector<std::size_t> v(n, 0);
    std::vector<double> z(n + 1, 0.0);
    std::size_t k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (std::size_t q = 1; q < n; ++q) {
        const double fq = f[q];
        while (true) {
            const std::size_t p = v[k];
            const double s = (fq + static_cast<double>(q * q) - f[p] - static_cast<double>(p * p)) /
                             (2.0 * static_cast<double>(q) - 2.0 * static_cast<double>(p));
            if (s <= z[k]) {
                if (k == 0) break;
                --k;
            } else {
                ++k;
                v[k] = q;
                z[k] = s;
                z[k + 1] = std::numeric_limits<double>::infinity();
                break;
            }
        }
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
        d[q] = dq * dq + f[v[k]];
    }
}

/// Exact 2-D squared EDT: seed cells carry 0, the rest +inf.
inline std::vector<double> edt_2d(std::size_t w, std::size_t h, const std::vector<bool>& seed) {
    const double inf = 1e20;
    std::vector<double> grid(w * h);
    for (std::size_t i = 0; i < w * h; ++i) grid[i] = seed[i] ? 0.0 : inf;
    std::vector<double> line, out;
    // columns
    for (std::size_t x = 0; x < w; ++x) {
        line.resize(h);
        for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
        edt_1d(line, out);
        for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = out[y];
    }
    // rows
    for (std::size_t y = 0; y < h; ++y) {
        line.assign(grid.begin() + static_cast<std::ptrdiff_t>(y * w),
                    grid.begin() + static_cast<std::ptrdiff_t>((y + 1) * w));
        edt_1d(line, out);
        for (std::size_t x = 0; x < w; ++x) grid[y * w + x] = out[x];
    }
    return grid;
}

} // namespace detail

/// Binarizes at `threshold` (pixel >= threshold counts as inside) and builds a
/// signed distance raster from two exact Euclidean distance transforms:
/// negative inside, positive outside, pixel units scaled into the unit box.
/// The half-pixel offset puts the zero level midway between boundary pixels,
/// so a straight edge yields an exactly linear profile of slope one.
/// An all-inside or all-outside image is degenerate: the missing side's
/// distance saturates at the image diagonal and `degenerate` is set.
inline FieldSpec sdf_from_bitmap(const ByteImage& img, std::uint8_t threshold, DenseVector latent = {},
                                 bool* degenerate = nullptr) {
    if (img.width == 0 || img.height == 0) throw DimensionError("sdf_from_bitmap: empty image");
    const std::size_t w = img.width, h = img.height, n = w * h;
    std::vector<bool> inside(n);
    std::size_t n_inside = 0;
    for (std::size_t i = 0; i < n; ++i) {
        inside[i] = img.pixels[i] >= threshold;
        n_inside += inside[i];
    }
    const bool degen = (n_inside == 0 || n_inside == n);
    if (degenerate) *degenerate = degen;

    const double cap = std::hypot(static_cast<double>(w), static_cast<double>(h));
    std::vector<double> dist_to_inside(n, cap), dist_to_outside(n, cap);
    if (n_inside > 0) {
        const auto sq = detail::edt_2d(w, h, inside);
        for (std::size_t i = 0; i < n; ++i) dist_to_inside[i] = std::sqrt(sq[i]);
    }
    if (n_inside < n) {
        std::vector<bool> outside(n);
        for (std::size_t i = 0; i < n; ++i) outside[i] = !inside[i];
        const auto sq = detail::edt_2d(w, h, outside);
        for (std::size_t i = 0; i < n; ++i) dist_to_outside[i] = std::sqrt(sq[i]);
    }

    RasterGrid grid;
    grid.nx = w;
    grid.ny = h;
    grid.spacing = 1.0 / static_cast<double>(std::max(w, h) - 1);
    grid.origin = {0.0, 0.0};
    grid.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double sd_pixels = inside[i] ? -(dist_to_outside[i] - 0.5) : (dist_to_inside[i] - 0.5);
        grid.values[i] = sd_pixels * grid.spacing;
    }
    return make_raster(std::move(grid), std::move(latent));
}

/// Plain-text polygon: one "x y" pair per line, implicit closure. Blank lines
/// and lines starting with '#' are skipped.
inline std::vector<std::array<double, 2>> parse_polygon_text(std::istream& in) {
    std::vector<std::array<double, 2>> verts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double x, y;
        if (!(ls >> x >> y)) throw ParseError("polygon line is not an 'x y' pair", verts.size());
        verts.push_back({x, y});
    }
    return verts;
}

} // namespace lipfield
