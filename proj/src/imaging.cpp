#include "eventfuse/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "eventfuse/errors.hpp"

namespace eventfuse {

GrayImage::GrayImage(int width, int height, double fill) {
    if (width < 1 || height < 1) throw SizeError("image dimensions must be positive");
    pixels_ = Eigen::MatrixXd::Constant(height, width, fill);
}

GrayImage::GrayImage(Eigen::MatrixXd pixels) : pixels_(std::move(pixels)) {
    if (pixels_.rows() < 1 || pixels_.cols() < 1) throw SizeError("image dimensions must be positive");
    if (!pixels_.allFinite()) throw ValidationError("image intensities must be finite");
}

void PixelModel::validate() const {
    if (!(bg_std > 0.0 && obj_std > 0.0)) throw ValidationError("pixel model standard deviations must be positive");
    if (neighborhood_radius < 1) throw ValidationError("neighborhood radius must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
}

double PixelModel::rejection_threshold() const {
    const boost::math::normal standard;
    return boost::math::quantile(standard, 1.0 - alpha / 2.0) * bg_std;
}

PixelModel estimate_background(const GrayImage& img, int neighborhood_radius, double alpha) {
    std::vector<double> ring;
    for (int x = 0; x < img.width(); ++x) {
        ring.push_back(img.at(x, 0));
        if (img.height() > 1) ring.push_back(img.at(x, img.height() - 1));
    }
    for (int y = 1; y + 1 < img.height(); ++y) {
        ring.push_back(img.at(0, y));
        if (img.width() > 1) ring.push_back(img.at(img.width() - 1, y));
    }
    const double mean = std::accumulate(ring.begin(), ring.end(), 0.0) / double(ring.size());
    double ss = 0.0;
    for (double v : ring) ss += (v - mean) * (v - mean);
    PixelModel m;
    m.bg_mean = mean;
    m.bg_std = ring.size() > 1 ? std::sqrt(ss / double(ring.size() - 1)) : 0.0;
    if (!(m.bg_std > 0.0)) throw DegenerateInputError("image border has zero variance; configure bg_std");
    m.obj_mean = mean;
    m.obj_std = m.bg_std;
    m.neighborhood_radius = neighborhood_radius;
    m.alpha = alpha;
    return m;
}

namespace {

// 1 where |I - mu_n| exceeds the threshold.
Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> rejection_mask(const GrayImage& img, const PixelModel& model) {
    model.validate();
    const int r = model.neighborhood_radius;
    if (img.width() < 2 * r + 1 || img.height() < 2 * r + 1)
        throw SizeError("image is smaller than the " + std::to_string(2 * r + 1) + "-pixel neighborhood");
    return (img.pixels().array() - model.bg_mean).abs() > model.rejection_threshold();
}

}  // namespace

std::vector<Pixel> classify_interior_pixels(const GrayImage& img, const PixelModel& model) {
    const auto reject = rejection_mask(img, model);
    const int r = model.neighborhood_radius;
    std::vector<Pixel> out;
    for (int y = r; y + r < img.height(); ++y)
        for (int x = r; x + r < img.width(); ++x)
            if (reject.block(y - r, x - r, 2 * r + 1, 2 * r + 1).all()) out.push_back({x, y, img.at(x, y)});
    return out;
}

std::vector<Pixel> classify_boundary_pixels(const GrayImage& img, const PixelModel& model) {
    const auto reject = rejection_mask(img, model);
    const int r = model.neighborhood_radius;
    std::vector<Pixel> out;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            if (!reject(y, x)) continue;
            const int x0 = std::max(0, x - r), y0 = std::max(0, y - r);
            const int x1 = std::min(img.width() - 1, x + r), y1 = std::min(img.height() - 1, y + r);
            if (!reject.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).all()) out.push_back({x, y, img.at(x, y)});
        }
    return out;
}

double pixel_distance(const Pixel& a, const Pixel& b, double beta) {
    return std::hypot(double(a.x - b.x), double(a.y - b.y)) + beta * std::abs(a.intensity - b.intensity);
}

void ClusterParams::validate() const {
    if (!(gamma > 0.0)) throw ValidationError("cluster cut-off gamma must be positive");
    if (!(beta >= 0.0)) throw ValidationError("cluster beta must be nonnegative");
}

DetectedObject DetectedObject::from_pixels(std::vector<Pixel> pixels) {
    if (pixels.empty()) throw ValidationError("detected object needs at least one pixel");
    DetectedObject o;
    int x0 = pixels.front().x, x1 = x0, y0 = pixels.front().y, y1 = y0;
    for (const auto& p : pixels) {
        o.centroid_x += p.x;
        o.centroid_y += p.y;
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    o.centroid_x /= double(pixels.size());
    o.centroid_y /= double(pixels.size());
    o.width_px = x1 - x0 + 1;
    o.height_px = y1 - y0 + 1;
    o.aspect_ratio = double(o.width_px) / double(o.height_px);
    o.pixels = std::move(pixels);
    return o;
}

std::vector<DetectedObject> cluster_interior(const std::vector<Pixel>& points, const ClusterParams& params) {
    params.validate();
    const std::size_t n = points.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (pixel_distance(points[i], points[j], params.beta) < params.gamma) {
                const auto a = root(i), b = root(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
    std::vector<std::vector<Pixel>> groups;
    std::vector<std::ptrdiff_t> slot(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = root(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<std::ptrdiff_t>(groups.size());
            groups.emplace_back();
        }
        groups[slot[r]].push_back(points[i]);
    }
    std::vector<DetectedObject> out;
    for (auto& g : groups) out.push_back(DetectedObject::from_pixels(std::move(g)));
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty list");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<DetectedObject> filter_objects_of_interest(const std::vector<DetectedObject>& objects, double c) {
    if (objects.empty()) throw ValidationError("no detected objects to filter");
    std::vector<double> ratios;
    for (const auto& o : objects) ratios.push_back(o.aspect_ratio);
    const double med = median(ratios);
    std::vector<DetectedObject> out;
    for (const auto& o : objects)
        if (std::abs(o.aspect_ratio - c) > med) out.push_back(o);
    return out;
}

ErrorSurface displacement_error_surface(const GrayImage& i1, const GrayImage& i2, const DetectedObject& obj,
                                        std::optional<int> search_radius) {
    ErrorSurface s;
    s.half_window = (std::max(obj.width_px, obj.height_px) + 1) / 2;
    s.origin_x = static_cast<int>(std::lround(obj.centroid_x));
    s.origin_y = static_cast<int>(std::lround(obj.centroid_y));
    const int n = s.half_window;
    if (s.origin_x - n < 0 || s.origin_y - n < 0 || s.origin_x + n >= i1.width() || s.origin_y + n >= i1.height())
        throw SizeError("correlation window exceeds the first image");
    int kx0 = n, kx1 = i2.width() - 1 - n, ky0 = n, ky1 = i2.height() - 1 - n;
    if (search_radius) {
        if (*search_radius < 0) throw ValidationError("search radius must be nonnegative");
        kx0 = std::max(kx0, s.origin_x - *search_radius);
        kx1 = std::min(kx1, s.origin_x + *search_radius);
        ky0 = std::max(ky0, s.origin_y - *search_radius);
        ky1 = std::min(ky1, s.origin_y + *search_radius);
    }
    if (kx1 < kx0 || ky1 < ky0) throw SizeError("no valid window position in the second image");
    s.x0 = kx0;
    s.y0 = ky0;
    const int side = 2 * n + 1;
    const auto tmpl = i1.pixels().block(s.origin_y - n, s.origin_x - n, side, side);
    s.e.resize(ky1 - ky0 + 1, kx1 - kx0 + 1);
    for (int l = ky0; l <= ky1; ++l)
        for (int k = kx0; k <= kx1; ++k)
            s.e(l - ky0, k - kx0) = (tmpl - i2.pixels().block(l - n, k - n, side, side)).squaredNorm();
    return s;
}

DisplacementDistribution displacement_distribution(const ErrorSurface& e, double z) {
    if (!(z > 0.0)) throw ValidationError("displacement scale z must be positive");
    DisplacementDistribution p;
    p.surface = e;
    p.scale = z;
    p.unnormalized = (-e.e.array() / z).exp().matrix();
    p.normalized = (-(e.e.array() - e.e.minCoeff()) / z).exp().matrix();
    p.normalized /= p.normalized.sum();
    return p;
}

std::pair<int, int> DisplacementDistribution::argmax() const {
    Eigen::Index best_r = 0, best_c = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < normalized.rows(); ++r)
        for (Eigen::Index c = 0; c < normalized.cols(); ++c)
            if (normalized(r, c) > best) {
                best = normalized(r, c);
                best_r = r;
                best_c = c;
            }
    return {surface.x0 + static_cast<int>(best_c) - surface.origin_x,
            surface.y0 + static_cast<int>(best_r) - surface.origin_y};
}

double displacement_event_probability(const DisplacementDistribution& p, std::pair<double, double> origin, double a,
                                      double b, double unit_scale) {
    if (!(a < b)) throw ValidationError("displacement event needs a < b");
    double total = 0.0;
    for (Eigen::Index r = 0; r < p.normalized.rows(); ++r)
        for (Eigen::Index c = 0; c < p.normalized.cols(); ++c) {
            const double u = p.surface.x0 + double(c) - origin.first;
            const double v = p.surface.y0 + double(r) - origin.second;
            const double d = unit_scale * std::hypot(u, v);
            if (a < d && d < b) total += p.normalized(r, c);
        }
    return std::clamp(total, 0.0, 1.0);
}

double displacement_event_probability(const DisplacementDistribution& p, double a, double b, double unit_scale) {
    return displacement_event_probability(p, {double(p.surface.origin_x), double(p.surface.origin_y)}, a, b,
                                          unit_scale);
}

void write_pgm(std::ostream& out, const GrayImage& img, int maxval) {
    if (maxval < 1 || maxval > 65535) throw ValidationError("graymap maxval must lie in [1, 65535]");
    out << "P2\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const long v = std::clamp(std::lround(img.at(x, y)), 0L, long(maxval));
            out << (x ? " " : "") << v;
        }
        out << '\n';
    }
}

namespace {

// Next whitespace-separated token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
    std::string tok;
    while (in >> tok) {
        if (tok.front() != '#') return tok;
        std::string rest;
        std::getline(in, rest);
    }
    throw ValidationError("graymap ends early");
}

long pgm_number(std::istream& in) {
    const auto tok = pgm_token(in);
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != tok.size() || v < 0) throw ValidationError("graymap value '" + tok + "' is not a nonnegative integer");
    return v;
}

}  // namespace

GrayImage read_pgm(std::istream& in) {
    if (pgm_token(in) != "P2") throw ValidationError("graymap must start with P2");
    const long w = pgm_number(in), h = pgm_number(in), maxval = pgm_number(in);
    if (w < 1 || h < 1) throw SizeError("graymap dimensions must be positive");
    if (maxval < 1) throw ValidationError("graymap maxval must be positive");
    Eigen::MatrixXd px(h, w);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            const long v = pgm_number(in);
            if (v > maxval) throw ValidationError("graymap value exceeds maxval");
            px(y, x) = double(v);
        }
    return GrayImage(std::move(px));
}

}  // namespace eventfuse
