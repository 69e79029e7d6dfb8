#include <algorithm>
#include <numeric>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "ftrom/registration.hpp"
#include "ftrom/rom.hpp"

using namespace ftrom;

namespace {

const Rect kDomain{-1.0, 1.0, 0.0, 1.0};

std::vector<Vec2> random_points(int n, uint64_t seed, double lo = -1, double hi = 1) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<Vec2> pts(static_cast<size_t>(n));
    for (auto& p : pts) p = Vec2(u(rng), u(rng));
    return pts;
}

double brute_force_assignment_cost(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::max();
    do {
        double c = 0;
        for (int i = 0; i < n; ++i) c += cost(i, perm[static_cast<size_t>(i)]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("edge_sensor on constant and linear fields") {
    const auto mesh = build_rect_mesh(12, 8, kDomain);
    const auto id = MappingDofs::identity(mesh);

    DiscreteState flat{Eigen::VectorXd::Constant(mesh.num_cells(), 3.0)};
    CHECK(edge_sensor(flat, mesh, id).values.cwiseAbs().maxCoeff() == 0.0);

    DiscreteState lin{Eigen::VectorXd(mesh.num_cells())};
    for (int c = 0; c < mesh.num_cells(); ++c)
        lin.values[c] = mesh.ref_cell_center(c).x();
    const auto s = edge_sensor(lin, mesh, id);
    for (int j = 0; j < mesh.nt(); ++j)
        for (int i = 0; i < mesh.nx(); ++i)
            CHECK(s.values[mesh.cell_index(i, j)] == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("edge_sensor traces the Burgers shock line") {
    const auto mesh = build_rect_mesh(50, 25, kDomain);
    const auto id = MappingDofs::identity(mesh);
    const BurgersConfig cfg(1e-3, 1.0);
    const auto Q = solve_hdm(mesh, cfg);
    const auto s = edge_sensor(Q, mesh, id);

    // Top 1% sensor cells must lie within 3 dx of x = -0.5 + 0.5 t.
    std::vector<int> idx(static_cast<size_t>(mesh.num_cells()));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return s.values[a] > s.values[b]; });
    const int top = mesh.num_cells() / 100;
    for (int k = 0; k < top; ++k) {
        const Vec2 c = mesh.ref_cell_center(idx[static_cast<size_t>(k)]);
        CHECK(std::abs(c.x() - (-0.5 + 0.5 * c.y())) < 3 * mesh.dx());
    }
}

TEST_CASE("rejection sampling acceptance statistics") {
    const auto mesh = build_rect_mesh(20, 10, kDomain);
    const auto id = MappingDofs::identity(mesh);

    SECTION("uniform density accepts everything") {
        SensorField s{Eigen::VectorXd::Constant(mesh.num_cells(), 0.8)};
        const auto set = rejection_sample(s, mesh, id, 500, 1e-8, 1.0, 1);
        CHECK(set.accepted == set.proposed);
    }

    SECTION("half-support indicator accepts about half") {
        SensorField s{Eigen::VectorXd::Zero(mesh.num_cells())};
        for (int c = 0; c < mesh.num_cells(); ++c)
            s.values[c] = (c < mesh.num_cells() / 2) ? 1.0 : 0.5;
        const auto set = rejection_sample(s, mesh, id, 10000, 1e-8, 1.0, 2);
        // Expected rate = mean(s)/max(s) = 0.75; per-proposal Bernoulli.
        const double rate = static_cast<double>(set.accepted) / set.proposed;
        const double sigma = std::sqrt(0.75 * 0.25 / 10000);
        CHECK(std::abs(rate - 0.75) < 3 * sigma + 1e-12);
    }

    SECTION("two-bump mass ratio 3:1") {
        SensorField s{Eigen::VectorXd::Zero(mesh.num_cells())};
        // Equal-area regions, density ratio 3:1 -> accepted mass ratio 3:1.
        for (int j = 0; j < mesh.nt(); ++j) {
            s.values[mesh.cell_index(2, j)] = 1.0;
            s.values[mesh.cell_index(15, j)] = 1.0 / 3.0;
        }
        const auto set = rejection_sample(s, mesh, id, 10000, 1e-8, 1.0, 3);
        int left = 0;
        for (const auto& p : set.points)
            if (p.x() < 0) ++left;
        const double ratio = static_cast<double>(left) / (set.accepted - left);
        CHECK(ratio == Catch::Approx(3.0).epsilon(0.15));
    }

    SECTION("every accepted sample lies in the support subdomain") {
        SensorField s{Eigen::VectorXd::Zero(mesh.num_cells())};
        for (int j = 0; j < mesh.nt(); ++j) s.values[mesh.cell_index(5, j)] = 2.0;
        const auto set = rejection_sample(s, mesh, id, 2000, 0.5, 1.0, 4);
        const double x_lo = -1.0 + 5 * mesh.dx(), x_hi = x_lo + mesh.dx();
        for (const auto& p : set.points) {
            CHECK(p.x() >= x_lo - 1e-12);
            CHECK(p.x() <= x_hi + 1e-12);
        }
    }

    SECTION("all-zero sensor is an error") {
        SensorField s{Eigen::VectorXd::Zero(mesh.num_cells())};
        CHECK_THROWS_AS(rejection_sample(s, mesh, id, 10, 1e-8, 1.0, 5), Error);
    }
}

TEST_CASE("rejection sampling is deterministic under a fixed seed") {
    const auto mesh = build_rect_mesh(16, 8, kDomain);
    const auto id = MappingDofs::identity(mesh);
    SensorField s{Eigen::VectorXd::Random(mesh.num_cells()).cwiseAbs()};
    const auto a = rejection_sample(s, mesh, id, 300, 1e-3, 1.0, 77);
    const auto b = rejection_sample(s, mesh, id, 300, 1e-3, 1.0, 77);
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i] == b.points[i]);
}

TEST_CASE("kmeans basic behavior") {
    SECTION("k = 1 yields the sample mean") {
        const auto pts = random_points(40, 8);
        const auto res = kmeans(pts, 1, 0);
        Vec2 mean = Vec2::Zero();
        for (const auto& p : pts) mean += p;
        mean /= static_cast<double>(pts.size());
        CHECK((res.centroids[0] - mean).norm() < 1e-12);
    }

    SECTION("two well-separated clouds") {
        std::vector<Vec2> pts;
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> u(-0.05, 0.05);
        Vec2 a(-0.7, 0.2), b(0.6, 0.8);
        Vec2 ma = Vec2::Zero(), mb = Vec2::Zero();
        for (int i = 0; i < 50; ++i) {
            const Vec2 pa = a + Vec2(u(rng), u(rng));
            const Vec2 pb = b + Vec2(u(rng), u(rng));
            pts.push_back(pa);
            pts.push_back(pb);
            ma += pa;
            mb += pb;
        }
        ma /= 50;
        mb /= 50;
        auto res = kmeans(pts, 2, 123);
        std::sort(res.centroids.begin(), res.centroids.end(),
                  [](const Vec2& p, const Vec2& q) { return p.x() < q.x(); });
        CHECK((res.centroids[0] - ma).norm() < 1e-9);
        CHECK((res.centroids[1] - mb).norm() < 1e-9);
    }

    SECTION("k = sample count gives zero objective") {
        const auto pts = random_points(6, 15);
        const auto res = kmeans(pts, 6, 9);
        CHECK(res.objective == Catch::Approx(0.0).margin(1e-20));
    }

    SECTION("fewer samples than k is an error") {
        CHECK_THROWS_AS(kmeans(random_points(3, 1), 5, 0), InvalidArgument);
    }

    SECTION("deterministic under fixed seed") {
        const auto pts = random_points(100, 2);
        const auto a = kmeans(pts, 4, 55);
        const auto b = kmeans(pts, 4, 55);
        for (size_t i = 0; i < a.centroids.size(); ++i)
            CHECK(a.centroids[i] == b.centroids[i]);
    }
}

TEST_CASE("extract_endpoints") {
    SECTION("segment extremes") {
        std::vector<Vec2> pts;
        for (int i = 0; i <= 20; ++i) pts.emplace_back(i / 20.0, i / 20.0);
        const auto [a, b] = extract_endpoints(pts);
        CHECK((a - Vec2(0, 0)).norm() < 1e-12);
        CHECK((b - Vec2(1, 1)).norm() < 1e-12);
    }

    SECTION("circle gives antipodal points along the principal axis") {
        std::vector<Vec2> pts;
        for (int i = 0; i < 36; ++i) {
            const double th = 2 * M_PI * i / 36.0;
            pts.emplace_back(std::cos(th), 0.5 * std::sin(th));
        }
        const auto [a, b] = extract_endpoints(pts);
        // Principal axis of this ellipse of points is x.
        CHECK((a - Vec2(-1, 0)).norm() < 1e-9);
        CHECK((b - Vec2(1, 0)).norm() < 1e-9);
    }

    SECTION("degenerate cloud is an error") {
        std::vector<Vec2> pts(5, Vec2(0.3, 0.3));
        CHECK_THROWS_AS(extract_endpoints(pts), Error);
    }
}

TEST_CASE("boundary_landmarks counts and placement") {
    const auto mesh = build_rect_mesh(4, 4, kDomain);

    const auto corners = boundary_landmarks(mesh, 2);
    CHECK(corners.size() == 4);

    const auto eight = boundary_landmarks(mesh, 3);
    CHECK(eight.size() == 8);

    const auto many = boundary_landmarks(mesh, 10);
    CHECK(many.size() == 36);
    const Rect& b = mesh.bounds();
    for (const auto& p : many) {
        const bool on_edge = p.x() == b.x_lo || p.x() == b.x_hi ||
                             p.y() == b.t_lo || p.y() == b.t_hi;
        CHECK(on_edge);
    }
}

TEST_CASE("correspond identity and small perturbations") {
    LandmarkSet ref;
    ref.shock_centroids = random_points(5, 31);
    ref.endpoints = random_points(2, 32);
    ref.boundary_points = random_points(4, 33);

    SECTION("identical sets give the identity permutation at zero cost") {
        const auto corr = correspond(ref, ref);
        for (size_t i = 0; i < corr.pairs.size(); ++i)
            CHECK(corr.pairs[i] == static_cast<int>(i));
        CHECK(corr.total_cost == Catch::Approx(0.0).margin(1e-14));
    }

    SECTION("small translation keeps nearest-neighbor pairing") {
        LandmarkSet mov = ref;
        const Vec2 delta(0.01, -0.005);
        for (auto& p : mov.shock_centroids) p += delta;
        for (auto& p : mov.endpoints) p += delta;
        const auto corr = correspond(mov, ref);
        for (size_t i = 0; i < corr.pairs.size(); ++i)
            CHECK(corr.pairs[i] == static_cast<int>(i));
        CHECK(corr.total_cost == Catch::Approx(7 * delta.norm()).epsilon(1e-12));
    }

    SECTION("class count mismatch is an error") {
        LandmarkSet mov = ref;
        mov.shock_centroids.pop_back();
        CHECK_THROWS_AS(correspond(mov, ref), InvalidArgument);
    }
}

TEST_CASE("Hungarian equals brute force on random instances") {
    std::mt19937_64 rng(5150);
    std::uniform_int_distribution<int> size(1, 7);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = size(rng);
        LandmarkSet mov, ref;
        mov.shock_centroids = random_points(n, 1000 + 2 * static_cast<uint64_t>(trial));
        ref.shock_centroids = random_points(n, 1001 + 2 * static_cast<uint64_t>(trial));
        const auto corr = correspond(mov, ref);

        Eigen::MatrixXd cost(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                cost(i, j) = (mov.shock_centroids[static_cast<size_t>(i)] -
                              ref.shock_centroids[static_cast<size_t>(j)]).norm();
        CHECK(corr.total_cost ==
              Catch::Approx(brute_force_assignment_cost(cost)).epsilon(1e-12));
    }
}

TEST_CASE("wendland_c2 values and shape") {
    CHECK(wendland_c2(0.0) == 1.0);
    CHECK(wendland_c2(1.0) == 0.0);
    CHECK(wendland_c2(2.5) == 0.0);
    CHECK(wendland_c2(0.5) == Catch::Approx(0.1875).epsilon(1e-15));
    CHECK_THROWS_AS(wendland_c2(-0.1), InvalidArgument);

    double prev = wendland_c2(0.0);
    for (int i = 1; i <= 10000; ++i) {
        const double v = wendland_c2(i / 10000.0);
        CHECK(v <= prev + 1e-15);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
    }
}

TEST_CASE("rbf_fit and rbf_eval") {
    SECTION("single center") {
        const auto warp = rbf_fit({Vec2(0.1, 0.2)}, {Vec2(0.3, 0.0)}, 0.5);
        CHECK(warp.weights(0, 0) == Catch::Approx(0.3));
        CHECK((rbf_eval(warp, Vec2(0.1, 0.2)) - Vec2(0.3, 0.0)).norm() < 1e-12);
    }

    SECTION("zero displacements give the identity warp") {
        const auto centers = random_points(6, 61);
        const auto warp = rbf_fit(centers, std::vector<Vec2>(6, Vec2::Zero()), 1.0);
        CHECK(warp.weights.cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("interpolation exactness at control points") {
        const auto centers = random_points(8, 62);
        const auto disp = random_points(8, 63, -0.2, 0.2);
        const auto warp = rbf_fit(centers, disp, 1.5);
        for (size_t j = 0; j < centers.size(); ++j)
            CHECK((rbf_eval(warp, centers[j]) - disp[j]).norm() < 1e-10);
    }

    SECTION("compact support: zero far from all centers") {
        const auto warp = rbf_fit({Vec2(0, 0)}, {Vec2(1, 1)}, 0.25);
        CHECK(rbf_eval(warp, Vec2(5, 5)) == Vec2(0, 0));
    }

    SECTION("antisymmetric displacements cancel at the midpoint") {
        const auto warp = rbf_fit({Vec2(-0.5, 0), Vec2(0.5, 0)},
                                  {Vec2(0.1, 0), Vec2(-0.1, 0)}, 2.0);
        CHECK(rbf_eval(warp, Vec2(0, 0)).norm() < 1e-12);
    }

    SECTION("duplicate centers rejected") {
        CHECK_THROWS_AS(
            rbf_fit({Vec2(0, 0), Vec2(0, 0)}, {Vec2(0, 0), Vec2(0, 0)}, 1.0),
            InvalidArgument);
    }

    SECTION("an effectively global radius gets a truncated solve") {
        // With r far beyond the point spread the kernel matrix is nearly
        // rank one and a direct solve produces huge oscillatory weights.
        // The spectral cutoff instead keeps only the resolvable modes: the
        // weights stay modest and the fit tracks the data approximately.
        const auto centers = random_points(12, 64);
        const auto disp = random_points(12, 65, -0.1, 0.1);
        const auto warp = rbf_fit(centers, disp, 100.0);
        CHECK(warp.weights.cwiseAbs().maxCoeff() < 1e5);
        for (size_t j = 0; j < centers.size(); ++j)
            CHECK((rbf_eval(warp, centers[j]) - disp[j]).norm() < 0.1);
    }
}

TEST_CASE("register_snapshot on Burgers training data") {
    const auto mesh = build_rect_mesh(50, 25, kDomain);
    const auto id = MappingDofs::identity(mesh);
    const auto Q_ref = solve_hdm(mesh, BurgersConfig(1e-3, 0.5));
    const auto Q_mov = solve_hdm(mesh, BurgersConfig(1e-3, 1.0));

    RegistrationParams p;
    p.seed = 2024;
    p.n_samples = 3000;

    SECTION("self-registration stays near the identity") {
        const auto dofs = register_snapshot(Q_ref, Q_ref, mesh, p);
        double worst = 0;
        for (int n = 0; n < mesh.num_nodes(); ++n)
            worst = std::max(worst, (dofs.node(n) - mesh.ref_node(n)).norm());
        CHECK(worst < 2 * mesh.dx());
    }

    SECTION("aligned moving field tracks the reference shock") {
        const auto dofs = register_snapshot(Q_mov, Q_ref, mesh, p);
        CHECK(check_mapping_validity(mesh, dofs).valid);
        const auto aligned = align_snapshot(Q_mov, dofs, mesh);
        for (double t : {0.2, 0.4, 0.6, 0.8, 1.0}) {
            const double pr = shock_position(Q_ref, mesh, id, t, 0.25);
            const double pa = shock_position(aligned, mesh, id, t, 0.5);
            CHECK(std::abs(pr - pa) < 2 * mesh.dx());
        }
    }

    SECTION("deterministic under a fixed seed") {
        const auto a = register_snapshot(Q_mov, Q_ref, mesh, p);
        const auto b = register_snapshot(Q_mov, Q_ref, mesh, p);
        for (int n = 0; n < mesh.num_nodes(); ++n) CHECK(a.node(n) == b.node(n));
    }
}

TEST_CASE("register_snapshot recovers a synthetic edge translation") {
    const auto mesh = build_rect_mesh(40, 20, kDomain);
    const double delta = 0.15;
    auto edge_field = [&](double shift) {
        DiscreteState Q{Eigen::VectorXd::Zero(mesh.num_cells())};
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const double x = mesh.ref_cell_center(c).x();
            // Smooth vertical edge at x = shift.
            Q.values[c] = 0.5 * (1.0 - std::tanh((x - shift) / 0.05));
        }
        return Q;
    };
    const auto Q_ref = edge_field(0.0);
    const auto Q_mov = edge_field(delta);

    RegistrationParams p;
    p.seed = 7;
    p.n_samples = 4000;
    p.threshold = 1e-3;
    p.radius = 2.0;
    const auto dofs = register_snapshot(Q_mov, Q_ref, mesh, p);

    // Nodes on the reference edge move by about +delta in x; boundary
    // nodes do not move at all.
    double near_edge = 0;
    int count = 0;
    for (int j = 1; j < mesh.nt(); ++j)
        for (int i = 1; i < mesh.nx(); ++i) {
            const int n = mesh.node_index(i, j);
            if (std::abs(mesh.ref_node(n).x()) < 0.05) {
                near_edge += (dofs.node(n) - mesh.ref_node(n)).x();
                ++count;
            }
        }
    near_edge /= count;
    CHECK(near_edge == Catch::Approx(delta).epsilon(0.10));

    // Boundary control points pin the normal displacement exactly, so nodes
    // sitting on them stay on their edge; the tangential component is free
    // (boundary nodes may slide along the edge, never off it). Nodes between
    // anchors pick up a little smooth normal leakage.
    const auto blm = boundary_landmarks(mesh, p.boundary_per_edge);
    const Rect& b = mesh.bounds();
    for (int n = 0; n < mesh.num_nodes(); ++n) {
        const Vec2& X = mesh.ref_node(n);
        for (const auto& lm : blm) {
            if ((X - lm).norm() >= 1e-12) continue;
            if (X.x() == b.x_lo || X.x() == b.x_hi)
                CHECK(std::abs((dofs.node(n) - X).x()) < 1e-9);
            if (X.y() == b.t_lo || X.y() == b.t_hi)
                CHECK(std::abs((dofs.node(n) - X).y()) < 1e-9);
        }
    }
    for (int i = 0; i <= mesh.nx(); ++i) {
        CHECK(std::abs((dofs.node(mesh.node_index(i, 0)) -
                        mesh.ref_node(mesh.node_index(i, 0))).y()) < 0.25 * delta);
        CHECK(std::abs((dofs.node(mesh.node_index(i, mesh.nt())) -
                        mesh.ref_node(mesh.node_index(i, mesh.nt()))).y()) < 0.25 * delta);
    }
    for (int j = 0; j <= mesh.nt(); ++j) {
        CHECK(std::abs((dofs.node(mesh.node_index(0, j)) -
                        mesh.ref_node(mesh.node_index(0, j))).x()) < 0.25 * delta);
        CHECK(std::abs((dofs.node(mesh.node_index(mesh.nx(), j)) -
                        mesh.ref_node(mesh.node_index(mesh.nx(), j))).x()) < 0.25 * delta);
    }
}
