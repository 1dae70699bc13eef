#include "tubempc/setcalc.hpp"

#include "oracle_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tubempc;

namespace {
Matrix mat2(double a, double b, double c, double d)
{
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}
}  // namespace

TEST_CASE("map_zonotope scales and collapses")
{
    Zonotope z(Matrix::Identity(2, 2));
    Zonotope scaled = map_zonotope(2.0 * Matrix::Identity(2, 2), z);
    REQUIRE((scaled.generators() - 2.0 * Matrix::Identity(2, 2)).norm() == 0.0);

    Zonotope zero = map_zonotope(Matrix::Zero(2, 2), z);
    REQUIRE(zero.generators().cwiseAbs().maxCoeff() == 0.0);

    Matrix row(1, 2);
    row << 1.0, 1.0;
    Zonotope img = map_zonotope(row, z);
    REQUIRE(img.dim() == 1);
    REQUIRE(img.generators()(0, 0) == 1.0);
    REQUIRE(img.generators()(0, 1) == 1.0);

    REQUIRE_THROWS_AS(map_zonotope(Matrix::Identity(3, 3), z), std::invalid_argument);
}

TEST_CASE("map_zonotope vertex-image oracle")
{
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Zonotope z = oracle::random_zonotope(rng, 2, 3, 1.0);
        Matrix m(1, 2);
        m << rng.uniform_sym(), rng.uniform_sym();
        Zonotope img = map_zonotope(m, z);
        // support of the image equals max over mapped vertices in both directions
        for (double dir : {1.0, -1.0}) {
            Vector c(1);
            c << dir;
            double by_img = support_zonotope(img, c);
            double by_verts = -std::numeric_limits<double>::infinity();
            for (const Vector& v : zonotope_vertices(z))
                by_verts = std::max(by_verts, dir * (m * v)(0));
            REQUIRE(by_img == Catch::Approx(by_verts).margin(1e-12));
        }
    }
}

TEST_CASE("minkowski_sum concatenates generators")
{
    Zonotope c(Matrix::Identity(2, 2));
    Matrix gd(2, 1);
    gd << 0.5, 0.5;
    Zonotope d(gd);
    Zonotope sum = minkowski_sum(c, d);
    Matrix expect(2, 3);
    expect << 1, 0, 0.5, 0, 1, 0.5;
    REQUIRE((sum.generators() - expect).cwiseAbs().maxCoeff() == 0.0);

    Zonotope zero = Zonotope::singleton(2);
    Zonotope same = minkowski_sum(c, zero);
    REQUIRE((same.generators() - c.generators()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("minkowski_sum vertex-sum oracle")
{
    Rng rng(12);
    for (int trial = 0; trial < 10; ++trial) {
        Zonotope c = oracle::random_zonotope(rng, 2, 2, 1.0);
        Zonotope d = oracle::random_zonotope(rng, 2, 2, 0.5);
        Zonotope sum = minkowski_sum(c, d);
        std::vector<Vector> pairwise;
        for (const Vector& a : zonotope_vertices(c))
            for (const Vector& b : zonotope_vertices(d)) pairwise.push_back(a + b);
        auto hull_sum = convex_hull_2d(zonotope_vertices(sum));
        auto hull_pairs = convex_hull_2d(pairwise);
        REQUIRE(hull_sum.size() == hull_pairs.size());
        // same support in many directions
        for (int k = 0; k < 32; ++k) {
            double ang = 2.0 * M_PI * k / 32.0;
            Vector dir(2);
            dir << std::cos(ang), std::sin(ang);
            double s1 = support_zonotope(sum, dir);
            double s2 = -1e300;
            for (const auto& p : pairwise) s2 = std::max(s2, dir.dot(p));
            REQUIRE(s1 == Catch::Approx(s2).margin(1e-10));
        }
    }
}

TEST_CASE("pontryagin_diff shrinks offsets row-wise")
{
    ConstraintPolytope box = ConstraintPolytope::box(Vector::Ones(2));
    Zonotope d(0.2 * Matrix::Identity(2, 2));
    ConstraintPolytope res = pontryagin_diff(box, d);
    REQUIRE(res.num_rows() == 4);
    for (int i = 0; i < 4; ++i) REQUIRE(res.f()[i] == Catch::Approx(0.8).margin(1e-15));

    Matrix f(1, 2);
    f << 1.0, 1.0;
    Vector b(1);
    b << 1.0;
    Matrix gd = Matrix::Zero(2, 2);
    gd(0, 0) = 0.3;
    gd(1, 1) = 0.1;
    ConstraintPolytope row(f, b);
    ConstraintPolytope shrunk = pontryagin_diff(row, Zonotope(gd));
    REQUIRE(shrunk.f()[0] == Catch::Approx(1.0 - 0.4).margin(1e-15));

    ConstraintPolytope same = pontryagin_diff(box, Zonotope::singleton(2));
    REQUIRE((same.f() - box.f()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pontryagin_diff matches the vertex oracle on random instances")
{
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        ConstraintPolytope c = oracle::random_polytope_2d(rng, trial % 5);
        Zonotope d = oracle::random_zonotope(rng, 2, 1 + trial % 4, 0.3);
        ConstraintPolytope res = pontryagin_diff(c, d);
        Vector g = oracle::erosion_offsets_by_vertices(c, d);
        REQUIRE((res.f() - (c.f() - g)).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("zonotope_vertices enumerates sign images")
{
    Zonotope z(Matrix::Identity(2, 2));
    auto verts = zonotope_vertices(z);
    REQUIRE(verts.size() == 4);
    for (const auto& v : verts) {
        REQUIRE(std::abs(std::abs(v[0]) - 1.0) < 1e-12);
        REQUIRE(std::abs(std::abs(v[1]) - 1.0) < 1e-12);
    }

    Matrix g1(1, 1);
    g1 << 1.0;
    auto scalar = zonotope_vertices(Zonotope(g1));
    REQUIRE(scalar.size() == 2);

    Matrix big(2, 17);
    big.setOnes();
    REQUIRE_THROWS(zonotope_vertices(Zonotope(big)));
}

TEST_CASE("zonotope_vertices hull equals dense-sample hull")
{
    Matrix g(2, 2);
    g << 1, 1, 0, 1;
    Zonotope z(g);
    auto verts = zonotope_vertices(z);
    Rng rng(14);
    std::vector<Vector> samples;
    for (int i = 0; i < 4000; ++i) samples.push_back(oracle::sample_zonotope(z, rng));
    auto hull_true = convex_hull_2d(verts);
    // every sampled point inside the hull-induced polytope
    ConstraintPolytope rows = zonotope_hrep_2d(z);
    for (const auto& p : samples) REQUIRE(rows.contains(p, 1e-9));
    // hull vertices reached by samples up to a margin
    for (const auto& hv : hull_true) {
        double best = 1e300;
        for (const auto& p : samples) best = std::min(best, (hv - p).norm());
        REQUIRE(best < 0.35);
    }
}

TEST_CASE("support_zonotope closed form")
{
    Matrix g = Matrix::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = 2.0;
    Vector c(2);
    c << 1.0, 1.0;
    REQUIRE(support_zonotope(Zonotope(g), c) == Catch::Approx(3.0).margin(1e-15));
    REQUIRE(support_zonotope(Zonotope(g), Vector::Zero(2)) == 0.0);
    REQUIRE(support_zonotope(Zonotope::singleton(2), c) == 0.0);
}

TEST_CASE("support equals vertex maximum exactly for small generator counts")
{
    Rng rng(15);
    for (int trial = 0; trial < 30; ++trial) {
        const int m = 1 + trial % 8;
        Zonotope z = oracle::random_zonotope(rng, 2, m, 1.0);
        Vector c(2);
        c << rng.uniform_sym(), rng.uniform_sym();
        // max over vertices, evaluated through the per-generator dots
        Vector d(m);
        for (int j = 0; j < m; ++j) d[j] = c.dot(z.generators().col(j));
        double best = -std::numeric_limits<double>::infinity();
        for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << m); ++mask) {
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += ((mask >> j) & 1u) ? d[j] : -d[j];
            best = std::max(best, s);
        }
        REQUIRE(support_zonotope(z, c) == best);
    }
}

TEST_CASE("normalize_polytope rescales rows")
{
    Matrix f(1, 1);
    f << 2.0;
    Vector b(1);
    b << 4.0;
    ConstraintPolytope c(f, b);
    ConstraintPolytope n = normalize_polytope(c);
    REQUIRE(n.F()(0, 0) == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(n.f()[0] == 1.0);

    ConstraintPolytope again = normalize_polytope(n);
    REQUIRE(again.F()(0, 0) == n.F()(0, 0));

    Vector bad(1);
    bad << -1.0;
    REQUIRE_THROWS_AS(normalize_polytope(ConstraintPolytope(f, bad)), std::invalid_argument);
}

TEST_CASE("normalize_polytope preserves membership on sampled points")
{
    Rng rng(16);
    ConstraintPolytope c = oracle::random_polytope_2d(rng, 4);
    ConstraintPolytope n = normalize_polytope(c);
    for (int i = 0; i < 1000; ++i) {
        Vector p(2);
        p << 4.0 * rng.uniform_sym(), 4.0 * rng.uniform_sym();
        REQUIRE(c.contains(p, 0.0) == n.contains(p, 0.0));
    }
}

TEST_CASE("ellipsoid_contains boundary behaviour")
{
    Ellipsoid e(Matrix::Identity(2, 2), 1.0);
    Vector x(2);
    x << 1.0, 0.0;
    REQUIRE(ellipsoid_contains(e, x));
    x << 1.1, 0.0;
    REQUIRE(!ellipsoid_contains(e, x));

    Ellipsoid e2(mat2(4, 0, 0, 1), 1.0);
    x << 0.5, 0.0;
    REQUIRE(ellipsoid_contains(e2, x));
}

TEST_CASE("erosion-dilation round trip stays inside")
{
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        ConstraintPolytope c = oracle::random_polytope_2d(rng, 3);
        Zonotope d = oracle::random_zonotope(rng, 2, 1 + trial % 4, 0.2);
        ConstraintPolytope eroded = pontryagin_diff(c, d);
        if (!eroded.nonempty()) continue;
        for (int i = 0; i < 10000; ++i) {
            Vector z = oracle::sample_polytope_2d(eroded, rng);
            Vector w = oracle::sample_zonotope(d, rng);
            REQUIRE(c.contains(z + w, 1e-9));
        }
    }
}

TEST_CASE("nested erosion inclusion on sampled points")
{
    Rng rng(18);
    for (int trial = 0; trial < 5; ++trial) {
        ConstraintPolytope c = oracle::random_polytope_2d(rng, 3);
        Zonotope d1 = oracle::random_zonotope(rng, 2, 2, 0.15);
        Zonotope d2 = oracle::random_zonotope(rng, 2, 2, 0.15);
        ConstraintPolytope lhs = pontryagin_diff(c, minkowski_sum(d1, d2));
        ConstraintPolytope rhs = pontryagin_diff(pontryagin_diff(c, d1), d2);
        if (!lhs.nonempty()) continue;
        for (int i = 0; i < 10000; ++i) {
            Vector z = oracle::sample_polytope_2d(lhs, rng);
            REQUIRE(rhs.contains(z, 1e-9));
        }
    }
}

TEST_CASE("pontryagin_diff keeps the row count")
{
    Rng rng(19);
    ConstraintPolytope c = oracle::random_polytope_2d(rng, 4);
    Zonotope d = oracle::random_zonotope(rng, 2, 3, 0.1);
    REQUIRE(pontryagin_diff(c, d).num_rows() == c.num_rows());
}
