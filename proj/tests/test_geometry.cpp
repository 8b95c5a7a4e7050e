#include "core/geometry.hpp"

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

using namespace dp3d;

namespace {

PointCloud make_cloud(std::vector<Vec3> points) {
    PointCloud cloud;
    cloud.id = "test";
    cloud.points = std::move(points);
    return cloud;
}

}  // namespace

TEST_CASE("resolution of collinear points") {
    const PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
    CHECK(geom::compute_resolution(cloud) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("resolution of a unit grid") {
    std::vector<Vec3> points;
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y)
            for (int z = 0; z < 3; ++z) points.emplace_back(x, y, z);
    CHECK(geom::compute_resolution(make_cloud(std::move(points))) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("resolution matches an all-pairs scan") {
    Rng rng(11);
    PointCloud cloud;
    for (int i = 0; i < 100; ++i) {
        cloud.points.emplace_back(rng.uniform01(), rng.uniform01(), rng.uniform01());
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double best = 1e300;
        for (std::size_t j = 0; j < cloud.size(); ++j) {
            if (i == j) continue;
            best = std::min(best, (cloud.points[i] - cloud.points[j]).norm());
        }
        sum += best;
    }
    CHECK(geom::compute_resolution(cloud) == doctest::Approx(sum / 100.0).epsilon(1e-12));
}

TEST_CASE("resolution requires two points") {
    CHECK_THROWS_AS(geom::compute_resolution(make_cloud({{0, 0, 0}})), Error);
}

TEST_CASE("subsample with fraction 1 is the identity") {
    Rng rng(5);
    const PointCloud cloud = testing::random_blob(rng, 40);
    const PointCloud out = geom::subsample(cloud, 1.0, 123);
    REQUIRE(out.size() == cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        CHECK((out.points[i] - cloud.points[i]).norm() == 0.0);
    }
}

TEST_CASE("subsample is deterministic and a subset") {
    std::vector<Vec3> points;
    for (int x = 0; x < 3; ++x)
        for (int y = 0; y < 3; ++y)
            for (int z = 0; z < 3; ++z) points.emplace_back(x, y, z);
    const PointCloud cloud = make_cloud(std::move(points));

    const PointCloud a = geom::subsample(cloud, 0.5, 7);
    const PointCloud b = geom::subsample(cloud, 0.5, 7);
    REQUIRE(a.size() == b.size());
    CHECK(a.size() == 14);  // ceil(0.5 * 27)
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a.points[i] - b.points[i]).norm() == 0.0);
    }

    Rng rng(17);
    const PointCloud big = testing::random_blob(rng, 1000);
    const PointCloud quarter = geom::subsample(big, 0.25, 3);
    CHECK(quarter.size() == 250);
    std::set<std::array<double, 3>> original;
    for (const Vec3& p : big.points) original.insert({p.x(), p.y(), p.z()});
    for (const Vec3& p : quarter.points) {
        CHECK(original.count({p.x(), p.y(), p.z()}) == 1);
    }
}

TEST_CASE("subsample refuses to go below two points") {
    const PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
    CHECK_THROWS_AS(geom::subsample(cloud, 0.3, 1), Error);
}

TEST_CASE("normals of a plane are consistently signed z") {
    Rng rng(23);
    PointCloud cloud;
    for (int i = 0; i < 120; ++i) {
        cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
    }
    const PointCloud out = geom::estimate_normals(cloud, 8);
    REQUIRE(out.normals.size() == cloud.size());
    const double sign = out.normals.front().z() > 0 ? 1.0 : -1.0;
    for (const Vec3& n : out.normals) {
        CHECK(std::abs(n.z()) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(n.z() * sign > 0.0);
    }
}

TEST_CASE("normals of a sphere point outward") {
    Rng rng(29);
    PointCloud cloud;
    for (int i = 0; i < 400; ++i) {
        Vec3 p(rng.normal(), rng.normal(), rng.normal());
        cloud.points.push_back(p.normalized());
    }
    const PointCloud out = geom::estimate_normals(cloud, 10);
    int aligned = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.normals[i].dot(out.points[i].normalized()) > 0.99) ++aligned;
    }
    CHECK(aligned >= static_cast<int>(0.95 * static_cast<double>(out.size())));
}

TEST_CASE("normal estimation rejects duplicate neighborhoods") {
    std::vector<Vec3> points(12, Vec3(1, 2, 3));
    points.push_back(Vec3(50, 0, 0));  // far away, its neighbors are all duplicates
    CHECK_THROWS_AS(geom::estimate_normals(make_cloud(std::move(points)), 5), Error);
}

TEST_CASE("ISS finds nothing on a flat plane") {
    Rng rng(31);
    PointCloud cloud;
    for (int i = 0; i < 300; ++i) {
        cloud.points.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0);
    }
    const IssParams params = geom::default_iss_params(geom::compute_resolution(cloud));
    CHECK(geom::detect_iss_keypoints(cloud, params).empty());
}

TEST_CASE("ISS keypoints of a cube lie near corners or edges") {
    Rng rng(37);
    PointCloud cloud;
    // dense cube surface
    for (int face = 0; face < 6; ++face) {
        const int axis = face / 2;
        const double side = face % 2 == 0 ? -1.0 : 1.0;
        for (int i = 0; i < 400; ++i) {
            Vec3 p;
            p[axis] = side;
            p[(axis + 1) % 3] = rng.uniform(-1, 1);
            p[(axis + 2) % 3] = rng.uniform(-1, 1);
            cloud.points.push_back(p);
        }
    }
    const IssParams params = geom::default_iss_params(geom::compute_resolution(cloud));
    const std::vector<int> keypoints = geom::detect_iss_keypoints(cloud, params);
    REQUIRE(!keypoints.empty());
    for (int k : keypoints) {
        const Vec3& p = cloud.points[k];
        // distance to the nearest cube edge: two coordinates at +-1
        std::array<double, 3> d = {1.0 - std::abs(p.x()), 1.0 - std::abs(p.y()),
                                   1.0 - std::abs(p.z())};
        std::sort(d.begin(), d.end());
        const double edge_distance = std::hypot(d[0], d[1]);
        CHECK(edge_distance <= params.salient_radius);
    }
}

TEST_CASE("ISS on a tiny cloud returns nothing") {
    const PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    IssParams params;
    params.salient_radius = 3.0;
    params.nms_radius = 2.0;
    CHECK(geom::detect_iss_keypoints(cloud, params).empty());
}

TEST_CASE("LRF scatter matrix of the symmetric hand case") {
    const PointCloud cloud =
        make_cloud({{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 0.5, 0}, {0, -0.5, 0}});
    const Mat3 m = geom::lrf_scatter_matrix(cloud, 0, 2.0);
    // weights (1, 1, 1.5, 1.5), sum 5: diag(2/5, 0.75/5, 0)
    Mat3 expected = Mat3::Zero();
    expected(0, 0) = 0.4;
    expected(1, 1) = 0.15;
    CHECK((m - expected).cwiseAbs().maxCoeff() <= 1e-12);

    const Lrf lrf = geom::compute_lrf(cloud, 0, 2.0);
    CHECK(std::abs(std::abs(lrf.axes(0, 0)) - 1.0) <= 1e-9);  // first axis = +-x
    CHECK(std::abs(std::abs(lrf.axes(1, 1)) - 1.0) <= 1e-9);  // second axis = +-y
}

TEST_CASE("LRF rejects collinear support") {
    const PointCloud cloud =
        make_cloud({{0, 0, 0}, {0.5, 0, 0}, {1, 0, 0}, {1.5, 0, 0}, {-0.5, 0, 0}});
    CHECK_THROWS_AS(geom::compute_lrf(cloud, 0, 2.0), Error);
}

TEST_CASE("LRF requires three support points") {
    const PointCloud cloud = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
    CHECK_THROWS_AS(geom::compute_lrf(cloud, 0, 0.5), Error);
}

TEST_CASE("LRF scatter matrix equals a naive double loop") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        PointCloud cloud = testing::random_blob(rng, 50, 0.8);
        cloud.points[0] = Vec3::Zero();
        const double radius = 1.5;
        Mat3 naive = Mat3::Zero();
        double weight_sum = 0.0;
        for (std::size_t j = 1; j < cloud.size(); ++j) {
            const Vec3 diff = cloud.points[j] - cloud.points[0];
            const double d = diff.norm();
            if (d <= 0.0 || d > radius) continue;
            const double w = radius - d;
            weight_sum += w;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) naive(r, c) += w * diff[r] * diff[c];
            }
        }
        naive /= weight_sum;
        const Mat3 m = geom::lrf_scatter_matrix(cloud, 0, radius);
        CHECK((m - naive).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("LRF axes are orthonormal and right-handed") {
    Rng rng(43);
    for (int trial = 0; trial < 10; ++trial) {
        const PointCloud cloud = testing::random_blob(rng, 60);
        const Lrf lrf = geom::compute_lrf(cloud, 0, 3.0);
        CHECK((lrf.axes * lrf.axes.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(lrf.axes.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("LRF is rigid-motion equivariant") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const PointCloud cloud = testing::random_blob(rng, 80);
        const Mat3 rot = testing::random_rotation(rng);
        const Vec3 trans(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
        const PointCloud moved = testing::rigid_move(cloud, rot, trans);

        const Lrf a = geom::compute_lrf(cloud, 0, 3.0);
        const Lrf b = geom::compute_lrf(moved, 0, 3.0);
        // rows transform by the rotation: axes_moved = axes * rot^T
        CHECK((b.axes - a.axes * rot.transpose()).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("patch from collinear candidates keeps only the nearest") {
    std::vector<Vec3> points = {{0, 0, 0}};
    for (int i = 1; i <= 10; ++i) points.emplace_back(0.1 * i, 0, 0);
    points.emplace_back(0, 0.5, 0);  // make the LRF well-posed
    points.emplace_back(0, -0.4, 0.2);
    const PointCloud cloud = make_cloud(std::move(points));

    PatchParams params;
    params.radius = 2.0;
    params.n_points = 8;
    params.theta_min = 1.2;
    const Patch patch = geom::extract_patch(cloud, 0, params);
    // nearest ray point plus the two off-axis points at wide angles
    CHECK(patch.valid_count == 3);
    REQUIRE(static_cast<int>(patch.points.size()) == params.n_points);
    for (int i = patch.valid_count; i < params.n_points; ++i) {
        CHECK((patch.points[i] - patch.points[i % patch.valid_count]).norm() == 0.0);
    }
}

TEST_CASE("theta_min zero accepts the nearest points in order") {
    Rng rng(53);
    const PointCloud cloud = testing::random_blob(rng, 100);
    PatchParams params;
    params.radius = 4.0;
    params.n_points = 16;
    params.theta_min = 0.0;
    const Patch patch = geom::extract_patch(cloud, 0, params);
    CHECK(patch.valid_count == 16);

    auto support = geom::radius_support(cloud, 0, params.radius);
    for (int i = 0; i < 16; ++i) {
        const Vec3 expected =
            patch.lrf.axes * (cloud.points[support[i].second] - cloud.points[0]) / params.radius;
        CHECK((patch.points[i] - expected).norm() <= 1e-15);
    }
}

TEST_CASE("angular constraint holds for every accepted pair") {
    Rng rng(59);
    for (int trial = 0; trial < 5; ++trial) {
        const PointCloud cloud = testing::random_blob(rng, 150);
        PatchParams params;
        params.radius = 4.0;
        params.n_points = 64;
        params.theta_min = 0.3;
        const Patch patch = geom::extract_patch(cloud, 0, params);
        const Mat3 back = patch.lrf.axes.transpose();
        for (int i = 0; i < patch.valid_count; ++i) {
            for (int j = i + 1; j < patch.valid_count; ++j) {
                const Vec3 u = (back * patch.points[i]).normalized();
                const Vec3 v = (back * patch.points[j]).normalized();
                const double angle = std::acos(std::clamp(u.dot(v), -1.0, 1.0));
                CHECK(angle >= params.theta_min - 1e-9);
            }
        }
        for (const Vec3& p : patch.points) CHECK(p.norm() <= 1.0 + 1e-9);
    }
}

TEST_CASE("patches are rigid-motion invariant") {
    Rng rng(61);
    int tested = 0;
    while (tested < 15) {
        const PointCloud cloud = testing::random_blob(rng, 120);
        // non-degenerate check: separated scatter eigenvalues
        const Mat3 m = geom::lrf_scatter_matrix(cloud, 0, 3.0);
        Eigen::SelfAdjointEigenSolver<Mat3> es(m);
        if (es.eigenvalues()[1] - es.eigenvalues()[0] < 1e-3 ||
            es.eigenvalues()[2] - es.eigenvalues()[1] < 1e-3) {
            continue;
        }
        ++tested;

        PatchParams params;
        params.radius = 3.0;
        params.n_points = 32;
        params.theta_min = 0.2;
        const Patch original = geom::extract_patch(cloud, 0, params);

        const Mat3 rot = testing::random_rotation(rng);
        const Vec3 trans(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        const Patch moved = geom::extract_patch(testing::rigid_move(cloud, rot, trans), 0, params);

        REQUIRE(moved.valid_count == original.valid_count);
        for (std::size_t i = 0; i < original.points.size(); ++i) {
            CHECK((original.points[i] - moved.points[i]).norm() <= 1e-6);
        }
    }
}
