#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "eventfuse/errors.hpp"
#include "eventfuse/imaging.hpp"

using namespace eventfuse;

namespace {

PixelModel unit_model() {
    PixelModel m;
    m.bg_mean = 10.0;
    m.bg_std = 1.0;
    m.obj_mean = 20.0;
    return m;
}

GrayImage with_block(int w, int h, int x0, int y0, int bw, int bh, double bg, double fg) {
    GrayImage img(w, h, bg);
    for (int y = y0; y < y0 + bh; ++y)
        for (int x = x0; x < x0 + bw; ++x) img.at(x, y) = fg;
    return img;
}

// Breadth-first components over the explicit < gamma adjacency matrix.
std::set<std::set<std::size_t>> bfs_components(const std::vector<Pixel>& pts, double beta, double gamma) {
    const std::size_t n = pts.size();
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = std::sqrt(double((pts[i].x - pts[j].x) * (pts[i].x - pts[j].x) +
                                              (pts[i].y - pts[j].y) * (pts[i].y - pts[j].y))) +
                             beta * std::fabs(pts[i].intensity - pts[j].intensity);
            adj[i][j] = i != j && d < gamma;
        }
    std::vector<bool> seen(n);
    std::set<std::set<std::size_t>> out;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::set<std::size_t> comp;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = true;
        while (!q.empty()) {
            auto i = q.front();
            q.pop();
            comp.insert(i);
            for (std::size_t j = 0; j < n; ++j)
                if (adj[i][j] && !seen[j]) {
                    seen[j] = true;
                    q.push(j);
                }
        }
        out.insert(comp);
    }
    return out;
}

DetectedObject box_object(int x, int y, int w, int h) {
    std::vector<Pixel> px;
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) px.push_back({x + i, y + j, 1.0});
    return DetectedObject::from_pixels(px);
}

GrayImage textured(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(0.0, 100.0);
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(x, y) = u(rng);
    return img;
}

GrayImage shifted(const GrayImage& src, int dx, int dy) {
    GrayImage out(src.width(), src.height());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x) {
            const int sx = x - dx, sy = y - dy;
            out.at(x, y) = src.inside(sx, sy) ? src.at(sx, sy) : 0.0;
        }
    return out;
}

}  // namespace

TEST(Interior, ConstantBackgroundIsEmpty) {
    EXPECT_TRUE(classify_interior_pixels(GrayImage(12, 9, 10.0), unit_model()).empty());
}

TEST(Interior, BlockInnerThreeByThree) {
    auto img = with_block(15, 15, 5, 4, 5, 5, 10.0, 20.0);
    auto s = classify_interior_pixels(img, unit_model());
    ASSERT_EQ(s.size(), 9u);
    for (const auto& p : s) {
        EXPECT_GE(p.x, 6);
        EXPECT_LE(p.x, 8);
        EXPECT_GE(p.y, 5);
        EXPECT_LE(p.y, 7);
        EXPECT_EQ(p.intensity, 20.0);
    }
    // The boundary set is the block's outer ring.
    EXPECT_EQ(classify_boundary_pixels(img, unit_model()).size(), 16u);
}

TEST(Interior, SingleBrightPixelIsEmpty) {
    auto img = with_block(9, 9, 4, 4, 1, 1, 10.0, 50.0);
    EXPECT_TRUE(classify_interior_pixels(img, unit_model()).empty());
}

TEST(Interior, ThresholdUsesNormalQuantile) {
    // q_{0.995} = 2.5758; 12.5 stays background, 12.6 rejects.
    auto m = unit_model();
    EXPECT_NEAR(m.rejection_threshold(), 2.5758293035489, 1e-9);
    EXPECT_TRUE(classify_interior_pixels(with_block(9, 9, 2, 2, 5, 5, 10.0, 12.5), m).empty());
    EXPECT_EQ(classify_interior_pixels(with_block(9, 9, 2, 2, 5, 5, 10.0, 12.6), m).size(), 9u);
}

TEST(Interior, SmallImageRejected) {
    EXPECT_THROW(classify_interior_pixels(GrayImage(2, 5, 0.0), unit_model()), SizeError);
}

TEST(Interior, BackgroundEstimateFromBorder) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g(50.0, 3.0);
    GrayImage img(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) img.at(x, y) = g(rng);
    auto m = estimate_background(img);
    EXPECT_NEAR(m.bg_mean, 50.0, 0.5);
    EXPECT_NEAR(m.bg_std, 3.0, 0.3);
    EXPECT_THROW(estimate_background(GrayImage(5, 5, 1.0)), DegenerateInputError);
}

TEST(Distance, Examples) {
    Pixel a{0, 0, 10.0}, b{3, 4, 12.0};
    EXPECT_DOUBLE_EQ(pixel_distance(a, b, 0.5), 6.0);
    EXPECT_DOUBLE_EQ(pixel_distance(a, b, 0.0), 5.0);
    EXPECT_EQ(pixel_distance(a, a, 0.7), 0.0);
    EXPECT_EQ(pixel_distance(a, b, 0.3), pixel_distance(b, a, 0.3));
    EXPECT_GT(pixel_distance(a, Pixel{0, 0, 11.0}, 0.1), 0.0);
}

TEST(Clustering, Examples) {
    ClusterParams p;
    p.gamma = 2.0;
    EXPECT_EQ(cluster_interior({{0, 0, 1}, {1, 0, 1}}, p).size(), 1u);
    EXPECT_EQ(cluster_interior({{0, 0, 1}, {4, 0, 1}}, p).size(), 2u);
    std::vector<Pixel> chain;
    for (int i = 0; i < 10; ++i) chain.push_back({i, 0, 1.0});
    auto one = cluster_interior(chain, p);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].width_px, 10);
    EXPECT_EQ(one[0].height_px, 1);
    EXPECT_DOUBLE_EQ(one[0].aspect_ratio, 10.0);
    EXPECT_DOUBLE_EQ(one[0].centroid_x, 4.5);
}

TEST(Clustering, MatchesBfsOracle) {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> coord(0, 30);
    std::uniform_real_distribution<double> inten(0.0, 5.0);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<Pixel> pts;
        const int n = 20 + trial * 7;
        for (int i = 0; i < n; ++i) pts.push_back({coord(rng), coord(rng), inten(rng)});
        ClusterParams p;
        p.beta = 0.2 * (trial % 3);
        p.gamma = 2.0 + 0.5 * (trial % 4);
        auto objs = cluster_interior(pts, p);
        // Map each object's pixels back to input indices.
        std::set<std::set<std::size_t>> got;
        std::vector<bool> used(pts.size());
        for (const auto& o : objs) {
            std::set<std::size_t> comp;
            for (const auto& q : o.pixels)
                for (std::size_t i = 0; i < pts.size(); ++i)
                    if (!used[i] && pts[i].x == q.x && pts[i].y == q.y && pts[i].intensity == q.intensity) {
                        used[i] = true;
                        comp.insert(i);
                        break;
                    }
            got.insert(comp);
        }
        EXPECT_EQ(got, bfs_components(pts, p.beta, p.gamma)) << "trial " << trial;
    }
}

TEST(Filter, Examples) {
    std::vector<DetectedObject> same{box_object(0, 0, 2, 2), box_object(5, 5, 2, 2)};
    EXPECT_TRUE(filter_objects_of_interest(same, 1.0).empty());
    std::vector<DetectedObject> field{box_object(0, 0, 3, 3), box_object(10, 0, 3, 3), box_object(20, 0, 3, 3),
                                      box_object(0, 10, 3, 3), box_object(10, 10, 12, 3)};
    auto kept = filter_objects_of_interest(field, 1.0);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_DOUBLE_EQ(kept[0].aspect_ratio, 4.0);
    // Singleton: kept iff |R - c| > R.
    std::vector<DetectedObject> single{box_object(0, 0, 4, 2)};
    EXPECT_TRUE(filter_objects_of_interest(single, 1.0).empty());
    EXPECT_EQ(filter_objects_of_interest(single, -0.5).size(), 1u);
    EXPECT_THROW(filter_objects_of_interest({}, 1.0), ValidationError);
}

TEST(Median, EvenAndOdd) {
    EXPECT_EQ(median({3, 1, 2}), 2.0);
    EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
}

TEST(Surface, SelfMatchAndShift) {
    std::mt19937_64 rng(5);
    auto i1 = textured(rng, 40, 30);
    auto obj = box_object(18, 13, 3, 3);
    auto self = displacement_error_surface(i1, i1, obj);
    EXPECT_EQ(self.half_window, 2);
    EXPECT_EQ(self.e(self.origin_y - self.y0, self.origin_x - self.x0), 0.0);
    auto i2 = shifted(i1, 5, 0);
    auto s = displacement_error_surface(i1, i2, obj);
    Eigen::Index r, c;
    s.e.minCoeff(&r, &c);
    EXPECT_EQ(s.x0 + c, s.origin_x + 5);
    EXPECT_EQ(s.y0 + r, s.origin_y);
    auto uniform = displacement_error_surface(i1, GrayImage(40, 30, 7.0), box_object(18, 13, 1, 1));
    EXPECT_GT(uniform.e.size(), 1);
    EXPECT_NEAR(uniform.e.maxCoeff() - uniform.e.minCoeff(), 0.0, 1e-9);
}

TEST(Surface, SearchRadiusAndBounds) {
    std::mt19937_64 rng(6);
    auto i1 = textured(rng, 40, 30);
    auto s = displacement_error_surface(i1, i1, box_object(18, 13, 3, 3), 4);
    EXPECT_EQ(s.e.rows(), 9);
    EXPECT_EQ(s.e.cols(), 9);
    EXPECT_THROW(displacement_error_surface(i1, i1, box_object(0, 0, 3, 3)), SizeError);
}

TEST(Distribution, PeakedShiftEvent) {
    std::mt19937_64 rng(7);
    auto i1 = textured(rng, 48, 32);
    auto i2 = shifted(i1, 5, 0);
    auto obj = box_object(20, 14, 3, 3);
    auto p = displacement_distribution(displacement_error_surface(i1, i2, obj, 10), 100.0);
    EXPECT_EQ(p.argmax(), std::make_pair(5, 0));
    EXPECT_NEAR(p.normalized.sum(), 1.0, 1e-9);
    EXPECT_GE(displacement_event_probability(p, 4.0, 6.0), 0.9);
    EXPECT_NEAR(displacement_event_probability(p, -1.0, 1e9), 1.0, 1e-9);
    EXPECT_EQ(displacement_event_probability(p, 100.0, 200.0), 0.0);
    EXPECT_THROW(displacement_event_probability(p, 2.0, 2.0), ValidationError);
    // Unit scale converts image pixels to reporting units.
    EXPECT_GE(displacement_event_probability(p, 20.0, 30.0, 5.0), 0.9);
}

TEST(Distribution, ZeroErrorGivesUnitMassAndArgmaxIsArgmin) {
    ErrorSurface e;
    e.e = Eigen::MatrixXd::Random(7, 9).cwiseAbs() * 50.0;
    e.e(3, 4) = 0.0;
    for (double z : {0.5, 5.0, 50.0, 500.0}) {
        auto p = displacement_distribution(e, z);
        EXPECT_EQ(p.unnormalized(3, 4), 1.0);
        Eigen::Index r, c, r2, c2;
        p.normalized.maxCoeff(&r, &c);
        e.e.minCoeff(&r2, &c2);
        EXPECT_EQ(r, r2);
        EXPECT_EQ(c, c2);
    }
    EXPECT_THROW(displacement_distribution(e, 0.0), ValidationError);
}

TEST(Distribution, EntropyNonDecreasingInZ) {
    ErrorSurface e;
    e.e = Eigen::MatrixXd::Random(11, 11).cwiseAbs() * 30.0;
    double prev = -1.0;
    for (double z = 0.25; z < 1000.0; z *= 2.0) {
        auto p = displacement_distribution(e, z);
        double h = 0.0;
        for (Eigen::Index i = 0; i < p.normalized.size(); ++i) {
            const double v = p.normalized.data()[i];
            if (v > 0) h -= v * std::log(v);
        }
        EXPECT_GE(h, prev - 1e-12);
        prev = h;
    }
}

TEST(Pgm, RoundTripAndErrors) {
    GrayImage img(4, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x) img.at(x, y) = x * 10 + y;
    img.at(0, 0) = 300.0;
    std::stringstream io;
    write_pgm(io, img);
    auto back = read_pgm(io);
    EXPECT_EQ(back.width(), 4);
    EXPECT_EQ(back.height(), 3);
    EXPECT_EQ(back.at(0, 0), 255.0);
    EXPECT_EQ(back.at(3, 2), 32.0);
    std::stringstream comment("P2\n# made by hand\n2 1\n9\n3 4\n");
    EXPECT_EQ(read_pgm(comment).at(1, 0), 4.0);
    std::stringstream bad("P5\n1 1\n9\n0\n");
    EXPECT_THROW(read_pgm(bad), ValidationError);
    std::stringstream shortfile("P2\n2 2\n9\n1 2 3\n");
    EXPECT_THROW(read_pgm(shortfile), ValidationError);
}
