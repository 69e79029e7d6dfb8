#pragma once

// Sparse registration pipeline: gradient-based edge sensor, rejection
// sampling of the sensor density, k-means landmark extraction, endpoint and
// boundary landmarks, minimum-distance correspondence, and RBF mesh warping
// with the Wendland C2 kernel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ftrom/assignment.hpp"
#include "ftrom/errors.hpp"
#include "ftrom/hdm.hpp"
#include "ftrom/mesh.hpp"

namespace ftrom {

struct SensorField {
    Eigen::VectorXd values;  // per cell, >= 0

    double max() const { return values.size() ? values.maxCoeff() : 0.0; }
};

/// s_hat = |grad q|_F^2, gradient reconstructed by central differences of
/// neighboring cell averages in physical coordinates (one-sided at
/// boundaries).
inline SensorField edge_sensor(const DiscreteState& Q, const StructuredQuadMesh& mesh,
                               const MappingDofs& dofs) {
    const int nx = mesh.nx(), nt = mesh.nt();
    if (Q.values.size() != mesh.num_cells())
        throw InvalidArgument("edge_sensor: state size mismatch");
    SensorField s;
    s.values.resize(mesh.num_cells());
    auto center = [&](int i, int j) { return dofs.cell_center(mesh, mesh.cell_index(i, j)); };
    auto q = [&](int i, int j) { return Q.values[mesh.cell_index(i, j)]; };
    for (int j = 0; j < nt; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int il = std::max(i - 1, 0), ir = std::min(i + 1, nx - 1);
            const int jl = std::max(j - 1, 0), jr = std::min(j + 1, nt - 1);
            const double gx = (q(ir, j) - q(il, j)) / (center(ir, j).x() - center(il, j).x());
            const double gt = (q(i, jr) - q(i, jl)) / (center(i, jr).y() - center(i, jl).y());
            s.values[mesh.cell_index(i, j)] = gx * gx + gt * gt;
        }
    }
    return s;
}

struct SampleSet {
    std::vector<Vec2> points;
    uint64_t seed = 0;
    int proposed = 0;
    int accepted = 0;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Rejection sampling of the sensor density over the support subdomain
/// Omega' = union of cells with s_hat >= threshold * max(s_hat). Proposals
/// are uniform over the physical area of Omega'; a proposal at cell c is
/// accepted when u <= s_hat(c) / C with C = safety * max(s_hat).
inline SampleSet rejection_sample(const SensorField& sensor,
                                  const StructuredQuadMesh& mesh,
                                  const MappingDofs& dofs, int n_proposals,
                                  double threshold, double safety, uint64_t seed) {
    if (n_proposals < 1)
        throw InvalidArgument("rejection_sample: n_proposals must be >= 1");
    if (safety < 1.0)
        throw InvalidArgument("rejection_sample: safety must be >= 1");
    const double smax = sensor.max();
    if (!(smax > 0))
        throw Error("rejection_sample: sensor has empty support (all zero)");
    const double cut = threshold * smax;
    const double C = safety * smax;

    // Support cells and their cumulative physical areas (shoelace).
    std::vector<int> cells;
    std::vector<double> cum;
    double total = 0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        if (sensor.values[c] < cut) continue;
        const auto nd = mesh.cell_nodes(c);
        double area = 0;
        for (int a = 0; a < 4; ++a) {
            const Vec2& p = dofs.node(nd[a]);
            const Vec2& r = dofs.node(nd[(a + 1) % 4]);
            area += p.x() * r.y() - r.x() * p.y();
        }
        area = 0.5 * std::abs(area);
        cells.push_back(c);
        total += area;
        cum.push_back(total);
    }

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    SampleSet out;
    out.seed = seed;
    out.proposed = n_proposals;
    for (int p = 0; p < n_proposals; ++p) {
        const double pick = unit(rng) * total;
        const auto it = std::lower_bound(cum.begin(), cum.end(), pick);
        const size_t k = std::min(static_cast<size_t>(it - cum.begin()), cells.size() - 1);
        const int c = cells[k];
        const double xi = unit(rng), eta = unit(rng);
        const Vec2 x = bilinear_map(mesh, dofs, c, xi, eta);
        const double u = unit(rng);
        if (u <= sensor.values[c] / C) out.points.push_back(x);
    }
    out.accepted = static_cast<int>(out.points.size());
    return out;
}

struct KmeansResult {
    std::vector<Vec2> centroids;
    std::vector<int> labels;
    double objective = 0.0;
    int iterations = 0;
};

/// Lloyd's algorithm with seeded k-means++ initialization. Empty clusters are
/// reseeded at the point farthest from its assigned centroid.
inline KmeansResult kmeans(const std::vector<Vec2>& samples, int k, uint64_t seed) {
    const int n = static_cast<int>(samples.size());
    if (n < k || k < 1)
        throw InvalidArgument("kmeans: need at least k samples");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // k-means++ seeding.
    std::vector<Vec2> cent;
    cent.reserve(static_cast<size_t>(k));
    cent.push_back(samples[static_cast<size_t>(
        std::min<int>(static_cast<int>(unit(rng) * n), n - 1))]);
    std::vector<double> d2(static_cast<size_t>(n));
    while (static_cast<int>(cent.size()) < k) {
        double sum = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : cent)
                best = std::min(best, (samples[static_cast<size_t>(i)] - c).squaredNorm());
            d2[static_cast<size_t>(i)] = best;
            sum += best;
        }
        if (sum == 0) {
            // Fewer distinct points than centers requested; duplicate a sample.
            cent.push_back(samples[0]);
            continue;
        }
        double pick = unit(rng) * sum;
        int chosen = n - 1;
        for (int i = 0; i < n; ++i) {
            pick -= d2[static_cast<size_t>(i)];
            if (pick <= 0) { chosen = i; break; }
        }
        cent.push_back(samples[static_cast<size_t>(chosen)]);
    }

    KmeansResult res;
    res.labels.assign(static_cast<size_t>(n), 0);
    double prev_obj = std::numeric_limits<double>::max();
    for (int it = 0; it < 100; ++it) {
        // Assignment step.
        double obj = 0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double d = (samples[static_cast<size_t>(i)] -
                                  cent[static_cast<size_t>(c)]).squaredNorm();
                if (d < best) { best = d; arg = c; }
            }
            res.labels[static_cast<size_t>(i)] = arg;
            obj += best;
        }
        if (obj > prev_obj + 1e-12 * (1 + prev_obj))
            throw Error("kmeans: objective increased");
        prev_obj = obj;
        res.objective = obj;
        res.iterations = it + 1;

        // Update step.
        std::vector<Vec2> nc(static_cast<size_t>(k), Vec2::Zero());
        std::vector<int> counts(static_cast<size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            nc[static_cast<size_t>(res.labels[static_cast<size_t>(i)])] +=
                samples[static_cast<size_t>(i)];
            counts[static_cast<size_t>(res.labels[static_cast<size_t>(i)])]++;
        }
        double move = 0;
        for (int c = 0; c < k; ++c) {
            Vec2 newc;
            if (counts[static_cast<size_t>(c)] == 0) {
                // Reseed at the point farthest from its assigned centroid.
                double worst = -1;
                int arg = 0;
                for (int i = 0; i < n; ++i) {
                    const double d =
                        (samples[static_cast<size_t>(i)] -
                         cent[static_cast<size_t>(res.labels[static_cast<size_t>(i)])])
                            .squaredNorm();
                    if (d > worst) { worst = d; arg = i; }
                }
                newc = samples[static_cast<size_t>(arg)];
            } else {
                newc = nc[static_cast<size_t>(c)] / counts[static_cast<size_t>(c)];
            }
            move = std::max(move, (newc - cent[static_cast<size_t>(c)]).norm());
            cent[static_cast<size_t>(c)] = newc;
        }
        if (move < 1e-10) break;
    }
    res.centroids = std::move(cent);
    return res;
}

/// The two samples extremal along the first principal axis of the cloud.
inline std::pair<Vec2, Vec2> extract_endpoints(const std::vector<Vec2>& samples) {
    if (samples.size() < 2)
        throw InvalidArgument("extract_endpoints: need at least 2 samples");
    Vec2 mean = Vec2::Zero();
    for (const auto& p : samples) mean += p;
    mean /= static_cast<double>(samples.size());
    Mat2 cov = Mat2::Zero();
    for (const auto& p : samples) cov += (p - mean) * (p - mean).transpose();
    if (cov.norm() == 0)
        throw Error("extract_endpoints: degenerate sample cloud");
    Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
    Vec2 axis = es.eigenvectors().col(1);  // largest eigenvalue
    // Deterministic sign: dominant component positive, ties toward +x.
    if (std::abs(axis.x()) >= std::abs(axis.y())) {
        if (axis.x() < 0) axis = -axis;
    } else if (axis.y() < 0) {
        axis = -axis;
    }
    auto lex_less = [](const Vec2& a, const Vec2& b) {
        return a.x() != b.x() ? a.x() < b.x() : a.y() < b.y();
    };
    size_t lo = 0, hi = 0;
    for (size_t i = 1; i < samples.size(); ++i) {
        const double pi = axis.dot(samples[i]);
        const double plo = axis.dot(samples[lo]);
        const double phi = axis.dot(samples[hi]);
        if (pi < plo || (pi == plo && lex_less(samples[i], samples[lo]))) lo = i;
        if (pi > phi || (pi == phi && lex_less(samples[i], samples[hi]))) hi = i;
    }
    return {samples[lo], samples[hi]};
}

/// Uniformly spaced points on each rectangle edge, corners deduplicated.
inline std::vector<Vec2> boundary_landmarks(const StructuredQuadMesh& mesh,
                                            int count_per_edge) {
    if (count_per_edge < 2)
        throw InvalidArgument("boundary_landmarks: count_per_edge must be >= 2");
    const Rect& b = mesh.bounds();
    std::vector<Vec2> pts;
    auto add = [&](const Vec2& p) {
        for (const auto& q : pts)
            if ((q - p).norm() < 1e-14) return;
        pts.push_back(p);
    };
    const int m = count_per_edge;
    for (int i = 0; i < m; ++i) {
        const double s = static_cast<double>(i) / (m - 1);
        add(Vec2(b.x_lo + s * b.width(), b.t_lo));   // bottom
        add(Vec2(b.x_lo + s * b.width(), b.t_hi));   // top
        add(Vec2(b.x_lo, b.t_lo + s * b.height()));  // left
        add(Vec2(b.x_hi, b.t_lo + s * b.height()));  // right
    }
    return pts;
}

/// Ordered landmark collection: [shock centroids; endpoints; boundary].
struct LandmarkSet {
    std::vector<Vec2> shock_centroids;
    std::vector<Vec2> endpoints;        // 2 points
    std::vector<Vec2> boundary_points;  // zero displacement targets

    std::vector<Vec2> all() const {
        std::vector<Vec2> v = shock_centroids;
        v.insert(v.end(), endpoints.begin(), endpoints.end());
        v.insert(v.end(), boundary_points.begin(), boundary_points.end());
        return v;
    }
    size_t size() const {
        return shock_centroids.size() + endpoints.size() + boundary_points.size();
    }
};

/// Bijection from moving landmarks onto reference landmarks, as an index
/// permutation over the concatenated ordering. Classes are matched
/// class-to-class, never across.
struct Correspondence {
    std::vector<int> pairs;  // pairs[moving index] = reference index
    double total_cost = 0.0;
};

inline Correspondence correspond(const LandmarkSet& moving, const LandmarkSet& reference) {
    if (moving.shock_centroids.size() != reference.shock_centroids.size() ||
        moving.endpoints.size() != reference.endpoints.size() ||
        moving.boundary_points.size() != reference.boundary_points.size())
        throw InvalidArgument("correspond: landmark class counts differ");

    Correspondence corr;
    corr.pairs.resize(moving.size());
    int offset = 0;
    auto match_class = [&](const std::vector<Vec2>& mov, const std::vector<Vec2>& ref) {
        const int n = static_cast<int>(mov.size());
        if (n > 0) {
            Eigen::MatrixXd cost(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    cost(i, j) = (mov[static_cast<size_t>(i)] -
                                  ref[static_cast<size_t>(j)]).norm();
            const auto a = hungarian_assignment(cost);
            for (int i = 0; i < n; ++i) {
                corr.pairs[static_cast<size_t>(offset + i)] = offset + a[static_cast<size_t>(i)];
                corr.total_cost += cost(i, a[static_cast<size_t>(i)]);
            }
        }
        offset += n;
    };
    match_class(moving.shock_centroids, reference.shock_centroids);
    match_class(moving.endpoints, reference.endpoints);
    match_class(moving.boundary_points, reference.boundary_points);
    return corr;
}

/// Wendland C2 kernel: (1-eta)^4 (4 eta + 1) on [0,1], zero beyond.
inline double wendland_c2(double eta) {
    if (eta < 0) throw InvalidArgument("wendland_c2: eta must be >= 0");
    if (eta >= 1) return 0.0;
    const double om = 1.0 - eta;
    const double om2 = om * om;
    return om2 * om2 * (4.0 * eta + 1.0);
}

struct RbfWarp {
    std::vector<Vec2> centers;
    double radius = 1.0;
    Eigen::MatrixXd weights;  // n_c x 2, one weight vector per dimension
};

/// Fit per-dimension weights from the symmetric kernel system M w^i = d^i
/// with M_ab = phi(|c_a - c_b| / r), solved through an eigendecomposition
/// with a relative spectral cutoff: modes with eigenvalues below
/// 1e-7 * lambda_max are discarded. For well-conditioned radii nothing is
/// discarded and the interpolation conditions hold to rounding. For
/// r >> domain size the kernel matrix is numerically rank deficient; the
/// cutoff then returns the least-squares fit over the resolvable modes,
/// avoiding the enormous oscillatory weights of a direct solve.
inline RbfWarp rbf_fit(const std::vector<Vec2>& centers,
                       const std::vector<Vec2>& displacements, double radius) {
    const int n = static_cast<int>(centers.size());
    if (n < 1) throw InvalidArgument("rbf_fit: need at least one center");
    if (displacements.size() != centers.size())
        throw InvalidArgument("rbf_fit: center/displacement count mismatch");
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if ((centers[static_cast<size_t>(a)] - centers[static_cast<size_t>(b)]).norm() < 1e-14)
                throw InvalidArgument("rbf_fit: duplicate centers");

    Eigen::MatrixXd M(n, n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            M(a, b) = wendland_c2(
                (centers[static_cast<size_t>(a)] - centers[static_cast<size_t>(b)]).norm() /
                radius);
    Eigen::MatrixXd D(n, 2);
    for (int a = 0; a < n; ++a) {
        D(a, 0) = displacements[static_cast<size_t>(a)].x();
        D(a, 1) = displacements[static_cast<size_t>(a)].y();
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success)
        throw Error("rbf_fit: kernel eigendecomposition failed");
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double lmax = ev[n - 1];
    if (!(lmax > 0)) throw Error("rbf_fit: kernel system singular");
    const double cutoff = 1e-7 * lmax;

    Eigen::MatrixXd Z = es.eigenvectors().transpose() * D;
    for (int a = 0; a < n; ++a) {
        if (ev[a] > cutoff)
            Z.row(a) /= ev[a];
        else
            Z.row(a).setZero();
    }

    RbfWarp warp;
    warp.centers = centers;
    warp.radius = radius;
    warp.weights = es.eigenvectors() * Z;
    return warp;
}

inline Vec2 rbf_eval(const RbfWarp& warp, const Vec2& X) {
    Vec2 dx = Vec2::Zero();
    for (size_t j = 0; j < warp.centers.size(); ++j) {
        const double phi = wendland_c2((X - warp.centers[j]).norm() / warp.radius);
        if (phi == 0.0) continue;
        dx.x() += warp.weights(static_cast<Eigen::Index>(j), 0) * phi;
        dx.y() += warp.weights(static_cast<Eigen::Index>(j), 1) * phi;
    }
    return dx;
}

struct RegistrationParams {
    int k = 5;               // shock cluster count
    int n_samples = 5000;    // rejection-sampling proposals N_s
    double threshold = 1e-8; // relative support cut on the sensor
    double radius = 100.0;   // RBF support radius
    int boundary_per_edge = 10;
    double safety = 1.0;     // C = safety * max(s_hat)
    uint64_t seed = 0;
};

inline LandmarkSet extract_landmarks(const DiscreteState& Q,
                                     const StructuredQuadMesh& mesh,
                                     const MappingDofs& dofs,
                                     const RegistrationParams& p, uint64_t seed) {
    const SensorField s = edge_sensor(Q, mesh, dofs);
    const SampleSet samples = rejection_sample(s, mesh, dofs, p.n_samples,
                                               p.threshold, p.safety, seed);
    if (static_cast<int>(samples.points.size()) < p.k)
        throw RegistrationFailure("extract_landmarks: too few accepted samples");
    LandmarkSet lm;
    lm.shock_centroids =
        kmeans(samples.points, p.k, detail::splitmix64(seed ^ 0x6b6dULL)).centroids;
    const auto ep = extract_endpoints(samples.points);
    lm.endpoints = {ep.first, ep.second};
    lm.boundary_points = boundary_landmarks(mesh, p.boundary_per_edge);
    return lm;
}

/// End-to-end registration of a moving snapshot onto a reference snapshot on
/// the same mesh: landmark extraction on both states, per-class minimum-cost
/// correspondence, RBF fit anchored at the reference landmarks with
/// displacements toward the corresponding moving landmarks, evaluated at
/// every mesh node.
///
/// Boundary landmarks keep nodes inside the domain by pinning the
/// displacement component normal to their edge; the tangential component is
/// left free so features may enter or exit through a boundary (the Burgers
/// shock crosses the final-time edge) without folding the mesh. Each
/// coordinate direction is therefore fitted with its own constraint set:
/// features plus the edges orthogonal to that direction.
inline MappingDofs register_snapshot(const DiscreteState& Q_mov,
                                     const DiscreteState& Q_ref,
                                     const StructuredQuadMesh& mesh,
                                     const RegistrationParams& p) {
    const MappingDofs id = MappingDofs::identity(mesh);
    // Both extractions share one proposal stream (common random numbers):
    // landmark jitter is then correlated between the two states and cancels
    // in the displacements, and registering a snapshot onto itself yields
    // the identity map exactly.
    const uint64_t extraction_seed = detail::splitmix64(p.seed);
    const LandmarkSet mov = extract_landmarks(Q_mov, mesh, id, p, extraction_seed);
    const LandmarkSet ref = extract_landmarks(Q_ref, mesh, id, p, extraction_seed);
    const Correspondence corr = correspond(mov, ref);

    const auto mov_all = mov.all();
    const auto ref_all = ref.all();
    const size_t n_feature = mov.shock_centroids.size() + mov.endpoints.size();

    // The warp maps reference-domain points toward the moving snapshot's
    // feature locations, so that resampling the moving field at warped
    // points stagnates its features at the reference positions.
    std::vector<Vec2> centers(ref_all.size());
    std::vector<Vec2> disp(ref_all.size(), Vec2::Zero());
    for (size_t j = 0; j < ref_all.size(); ++j) centers[j] = ref_all[j];
    for (size_t i = 0; i < n_feature; ++i) {
        const size_t j = static_cast<size_t>(corr.pairs[i]);
        disp[j] = mov_all[i] - ref_all[j];
    }

    // Cluster centroids sample a continuous feature curve, so the component
    // of a pairing displacement tangent to that curve reflects where the
    // samples happened to land, not feature motion. Slide each moving
    // centroid along the moving feature's principal axis to its reference
    // partner's time level; the displacement then lives in a constant-time
    // section. Endpoints are single extreme samples carrying the largest
    // transverse jitter, so they take the centroid axis itself at their
    // level instead of their own sampled offset.
    const size_t n_centroid = mov.shock_centroids.size();
    if (n_centroid >= 2) {
        Vec2 mean = Vec2::Zero();
        for (size_t i = 0; i < n_centroid; ++i) mean += mov_all[i];
        mean /= static_cast<double>(n_centroid);
        Mat2 cov = Mat2::Zero();
        for (size_t i = 0; i < n_centroid; ++i)
            cov += (mov_all[i] - mean) * (mov_all[i] - mean).transpose();
        Eigen::SelfAdjointEigenSolver<Mat2> axes(cov);
        const Vec2 axis = axes.eigenvectors().col(1);
        if (std::abs(axis.y()) > 0.2) {
            const double slope = axis.x() / axis.y();
            for (size_t i = 0; i < n_feature; ++i) {
                const size_t j = static_cast<size_t>(corr.pairs[i]);
                const double x_at =
                    i < n_centroid
                        ? mov_all[i].x() + slope * (centers[j].y() - mov_all[i].y())
                        : mean.x() + slope * (centers[j].y() - mean.y());
                disp[j] = Vec2(x_at - centers[j].x(), 0.0);
            }
        }
    }

    const Rect& b = mesh.bounds();
    const double tol = 1e-12;
    RbfWarp warp;
    warp.centers = centers;
    warp.radius = p.radius;
    warp.weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(centers.size()), 2);
    for (int dim = 0; dim < 2; ++dim) {
        std::vector<size_t> active;
        std::vector<Vec2> sub_centers, sub_disp;
        for (size_t j = 0; j < centers.size(); ++j) {
            bool use = j < n_feature;
            if (!use) {
                // Edge anchors constrain only their normal direction.
                use = dim == 0 ? (std::abs(centers[j].x() - b.x_lo) < tol ||
                                  std::abs(centers[j].x() - b.x_hi) < tol)
                               : (std::abs(centers[j].y() - b.t_lo) < tol ||
                                  std::abs(centers[j].y() - b.t_hi) < tol);
            }
            if (!use) continue;
            active.push_back(j);
            sub_centers.push_back(centers[j]);
            sub_disp.emplace_back(dim == 0 ? disp[j].x() : disp[j].y(), 0.0);
        }
        const RbfWarp fit = rbf_fit(sub_centers, sub_disp, p.radius);
        for (size_t a = 0; a < active.size(); ++a)
            warp.weights(static_cast<Eigen::Index>(active[a]), dim) =
                fit.weights(static_cast<Eigen::Index>(a), 0);
    }

    MappingDofs out;
    out.phys_nodes.resize(static_cast<size_t>(mesh.num_nodes()));
    for (int n = 0; n < mesh.num_nodes(); ++n)
        out.phys_nodes[static_cast<size_t>(n)] =
            mesh.ref_node(n) + rbf_eval(warp, mesh.ref_node(n));

    const auto validity = check_mapping_validity(mesh, out);
    if (!validity.valid)
        throw RegistrationFailure("register_snapshot: warped mesh is invalid",
                                  validity.offending_cells);
    return out;
}

}  // namespace ftrom
