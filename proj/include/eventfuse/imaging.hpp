#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace eventfuse {

// Row-major intensities; at(x, y) is column x of row y.
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, double fill = 0.0);
    explicit GrayImage(Eigen::MatrixXd pixels);

    int width() const noexcept { return static_cast<int>(pixels_.cols()); }
    int height() const noexcept { return static_cast<int>(pixels_.rows()); }
    double at(int x, int y) const { return pixels_(y, x); }
    double& at(int x, int y) { return pixels_(y, x); }
    bool inside(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width() && y < height(); }
    const Eigen::MatrixXd& pixels() const noexcept { return pixels_; }

private:
    Eigen::MatrixXd pixels_;
};

struct PixelModel {
    double bg_mean = 0.0;
    double bg_std = 1.0;
    double obj_mean = 0.0;
    double obj_std = 1.0;
    int neighborhood_radius = 1;
    double alpha = 0.01;

    void validate() const;
    // q_{1 - alpha/2} * bg_std.
    double rejection_threshold() const;
};

// Mean and standard deviation of the outermost pixel ring.
PixelModel estimate_background(const GrayImage& img, int neighborhood_radius = 1, double alpha = 0.01);

struct Pixel {
    int x = 0;
    int y = 0;
    double intensity = 0.0;
};

// Pixels whose whole square neighborhood fits and rejects the background.
std::vector<Pixel> classify_interior_pixels(const GrayImage& img, const PixelModel& model);
// Rejecting pixels with at least one non-rejecting neighbor.
std::vector<Pixel> classify_boundary_pixels(const GrayImage& img, const PixelModel& model);

double pixel_distance(const Pixel& a, const Pixel& b, double beta);

struct ClusterParams {
    double beta = 0.0;
    double gamma = 1.5;
    double c = 0.0;

    void validate() const;
};

struct DetectedObject {
    std::vector<Pixel> pixels;
    double centroid_x = 0.0;
    double centroid_y = 0.0;
    int width_px = 0;
    int height_px = 0;
    double aspect_ratio = 0.0;

    static DetectedObject from_pixels(std::vector<Pixel> pixels);
};

// Connected components of the graph with edges pixel_distance < gamma,
// ordered by their smallest input index.
std::vector<DetectedObject> cluster_interior(const std::vector<Pixel>& points, const ClusterParams& params);

// Keeps objects with |R - c| > median R.
std::vector<DetectedObject> filter_objects_of_interest(const std::vector<DetectedObject>& objects, double c);
double median(std::vector<double> values);

// E(K, L) over candidate window centres in i2. Cell (row, col) holds centre
// (x0 + col, y0 + row); origin is the rounded object centroid in i1.
struct ErrorSurface {
    Eigen::MatrixXd e;
    int x0 = 0;
    int y0 = 0;
    int origin_x = 0;
    int origin_y = 0;
    int half_window = 0;
};

// Window half-width ceil(max(W, H) / 2). Candidates are every centre whose
// window fits in i2, limited to |K - x|, |L - y| <= search_radius when given.
ErrorSurface displacement_error_surface(const GrayImage& i1, const GrayImage& i2, const DetectedObject& obj,
                                        std::optional<int> search_radius = std::nullopt);

struct DisplacementDistribution {
    ErrorSurface surface;
    Eigen::MatrixXd unnormalized;  // exp(-E / z)
    Eigen::MatrixXd normalized;    // exp(-(E - min E) / z), unit sum
    double scale = 1.0;

    // Displacement (u, v) of the most probable cell; ties go to the first in
    // row-major order.
    std::pair<int, int> argmax() const;
};

DisplacementDistribution displacement_distribution(const ErrorSurface& e, double z);

// Sum of normalized P_d over cells with a < unit_scale * |(u, v)| < b, where
// (u, v) is measured from origin.
double displacement_event_probability(const DisplacementDistribution& p, std::pair<double, double> origin, double a,
                                       double b, double unit_scale = 1.0);
double displacement_event_probability(const DisplacementDistribution& p, double a, double b, double unit_scale = 1.0);

// Plain text graymap: intensities are rounded and clamped to [0, maxval].
void write_pgm(std::ostream& out, const GrayImage& img, int maxval = 255);
GrayImage read_pgm(std::istream& in);

}  // namespace eventfuse
