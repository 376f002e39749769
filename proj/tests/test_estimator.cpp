#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "oracles.hpp"
#include "tensorciq/estimator.hpp"
#include "tensorciq/synth.hpp"
#include "tensorciq/uq.hpp"

using namespace tensorciq;
using Catch::Approx;

namespace {

ObservationSet exact_obs(const FactorMatrix& Ustar, double p = 1.0) {
    std::vector<Observation> entries;
    for_each_canonical(Ustar.d(), [&](const CanonicalTriple& t) {
        entries.push_back(Observation{t, cp_eval(Ustar, t)});
    });
    return ObservationSet(Ustar.d(), p, std::move(entries));
}

// Orthogonal sign-pattern factors (flat entry magnitudes), for which removing
// the diagonal of A A^T shifts the spectrum by an exact multiple of I and the
// spectral subspace is exact.
FactorMatrix sign_pattern_factors(int d, int r, double scale) {
    Matrix m(d, r);
    for (int l = 0; l < r; ++l)
        for (int i = 0; i < d; ++i) m(i, l) = ((i >> l) & 1) ? -scale : scale;
    return FactorMatrix(std::move(m));
}

// A safe constant step for small test instances (curvature scales like
// 12 p ||u||^4 with ||u||^2 close to d for unit-variance factors).
double safe_eta(int d, double p) { return 0.5 / (12.0 * p * d * d); }

}  // namespace

TEST_CASE("default_params returns the experimental defaults") {
    const EstimatorParams a = default_params(100, 4, 0.2);
    CHECK(a.L == 16);
    CHECK(a.eps_th == 0.4);
    CHECK(a.t0 == 100);
    // 3e-5 / (6p): the reference eta for the closure-summed gradient.
    CHECK(a.eta == Approx(2.5e-5));

    const EstimatorParams b = default_params(100, 2, 0.2);
    CHECK(b.L == 4);
    CHECK(b.eta == Approx(2.5e-5));

    for (int r : {1, 2, 3, 5, 8}) CHECK(default_params(50, r, 0.5).L >= r);
}

TEST_CASE("spectral_matrix matches the dense loop oracle") {
    const auto obs = oracles::random_obs(6, 0.6, 7, 0.7);
    const auto [cube, mask] = oracles::dense_from_obs(obs);
    Matrix A = oracles::dense_unfold(cube) / obs.p();
    Matrix Bref = A * A.transpose();
    Bref.diagonal().setZero();
    CHECK((spectral_matrix(obs) - Bref).norm() == Approx(0.0).margin(1e-9));
}

TEST_CASE("spectral_subspace recovers a rank-1 sign-pattern factor exactly") {
    const FactorMatrix Ustar = sign_pattern_factors(16, 1, 1.2);
    const auto obs = exact_obs(Ustar);
    const Matrix sub = spectral_subspace(obs, 1);
    const Vector u = Ustar.column(0).normalized();
    CHECK(std::abs(sub.col(0).dot(u)) > 1.0 - 1e-8);
}

TEST_CASE("spectral_subspace projector matches the truth span for orthogonal factors") {
    const FactorMatrix Ustar = sign_pattern_factors(16, 2, 0.9);
    REQUIRE(std::abs(Ustar.column(0).dot(Ustar.column(1))) < 1e-12);
    const auto obs = exact_obs(Ustar);
    const Matrix sub = spectral_subspace(obs, 2);
    Matrix span(16, 2);
    span.col(0) = Ustar.column(0).normalized();
    span.col(1) = Ustar.column(1).normalized();
    const Matrix P_est = sub * sub.transpose();
    const Matrix P_true = span * span.transpose();
    CHECK((P_est - P_true).norm() < 1e-6);
}

TEST_CASE("spectral_subspace columns are orthonormal") {
    const auto obs = oracles::random_obs(10, 0.5, 13, 0.5);
    const Matrix sub = spectral_subspace(obs, 3);
    CHECK((sub.transpose() * sub - Matrix::Identity(3, 3)).norm() < 1e-8);
}

TEST_CASE("subspace comparisons are projector-invariant under rotation") {
    const auto obs = oracles::random_obs(8, 0.6, 17, 1.0);
    const Matrix sub = spectral_subspace(obs, 2);
    const double c = std::cos(0.77), s = std::sin(0.77);
    Matrix rot(2, 2);
    rot << c, -s, s, c;
    const Matrix rotated = sub * rot;
    CHECK((rotated * rotated.transpose() - sub * sub.transpose()).norm() < 1e-8);
}

TEST_CASE("retrieve_one_factor on exact rank-1 data") {
    const FactorMatrix Ustar(oracles::random_matrix(12, 1, 19));
    const auto obs = exact_obs(Ustar);
    const Vector u = Ustar.column(0);
    Matrix span = u.normalized();
    const Vector g = oracles::random_matrix(12, 1, 23).col(0);
    const InitCandidate cand = retrieve_one_factor(obs, 1.0, span, g);
    CHECK(std::abs(cand.direction.dot(u.normalized())) > 1.0 - 1e-8);
    CHECK(cand.strength == Approx(std::pow(u.norm(), 3)).epsilon(1e-6));
    CHECK(cand.spec_gap > 0.0);
}

TEST_CASE("retrieve_one_factor rejects a zero projection") {
    const FactorMatrix Ustar(oracles::random_matrix(6, 1, 29));
    const auto obs = exact_obs(Ustar);
    const Matrix span = Ustar.column(0).normalized();
    const InitCandidate cand = retrieve_one_factor(obs, 1.0, span, Vector::Zero(6));
    CHECK(cand.strength == 0.0);
    CHECK(cand.spec_gap == 0.0);
}

TEST_CASE("retrieve_one_factor gap matches a dense SVD oracle") {
    const auto obs = oracles::random_obs(6, 0.7, 31, 0.8);
    const Matrix span = spectral_subspace(obs, 2);
    const Vector g = oracles::random_matrix(6, 1, 37).col(0);
    const InitCandidate cand = retrieve_one_factor(obs, obs.p(), span, g);

    const auto [cube, mask] = oracles::dense_from_obs(obs);
    const Vector theta = span * (span.transpose() * g);
    const Matrix M = oracles::dense_tvp(cube, theta) / obs.p();
    Eigen::JacobiSVD<Matrix> svd(M);
    CHECK(cand.spec_gap ==
          Approx(svd.singularValues()(0) - svd.singularValues()(1)).margin(1e-8));
}

TEST_CASE("prune keeps candidates ordered by spec-gap") {
    std::vector<InitCandidate> pool;
    Matrix eye = Matrix::Identity(5, 5);
    for (int l = 0; l < 3; ++l)
        pool.push_back(InitCandidate{eye.col(l), 1.0 + l, 3.0 - l});
    const auto picks = prune(pool, 0.4, 3);
    REQUIRE(picks.size() == 3);
    CHECK(picks[0].spec_gap == 3.0);
    CHECK(picks[1].spec_gap == 2.0);
    CHECK(picks[2].spec_gap == 1.0);
}

TEST_CASE("prune removes duplicate directions after the first pick") {
    Matrix eye = Matrix::Identity(4, 4);
    std::vector<InitCandidate> pool{
        InitCandidate{eye.col(0), 2.0, 5.0},
        InitCandidate{eye.col(0), 2.0, 4.0},  // duplicate, must be removed
        InitCandidate{eye.col(1), 1.0, 3.0},
    };
    const auto picks = prune(pool, 0.4, 2);
    REQUIRE(picks.size() == 2);
    CHECK(std::abs(picks[0].direction.dot(eye.col(0))) > 0.99);
    CHECK(std::abs(picks[1].direction.dot(eye.col(1))) > 0.99);
    CHECK_THROWS_AS(prune(pool, 0.4, 3), InitExhausted);
}

TEST_CASE("prune picks one candidate per perturbed cluster") {
    const int d = 8;
    Matrix eye = Matrix::Identity(d, d);
    std::vector<InitCandidate> pool;
    int n = 0;
    for (int rep = 0; rep < 4; ++rep)
        for (int c = 0; c < 4; ++c) {
            Vector dir = eye.col(c);
            for (int i = 0; i < d; ++i)
                dir(i) += 1e-3 * oracles::test_gaussian(41, 100 * n + i);
            dir.normalize();
            pool.push_back(InitCandidate{dir, 1.0, 1.0 + 0.01 * n});
            ++n;
        }
    const auto picks = prune(pool, 0.4, 4);
    REQUIRE(picks.size() == 4);
    // exhaustive check: each cluster center claimed exactly once
    std::vector<int> claimed(4, 0);
    for (const auto& pick : picks)
        for (int c = 0; c < 4; ++c)
            if (std::abs(pick.direction.dot(eye.col(c))) > 0.9) ++claimed[c];
    for (int c = 0; c < 4; ++c) CHECK(claimed[c] == 1);
}

TEST_CASE("spectral_init recovers an exact rank-1 factor including scale") {
    const FactorMatrix Ustar(oracles::random_matrix(14, 1, 43));
    const auto obs = exact_obs(Ustar);
    const FactorMatrix U0 = spectral_init(obs, 1.0, 1, default_params(14, 1, 1.0), 5);
    const double rel = (U0.column(0) - Ustar.column(0)).norm() / Ustar.column(0).norm();
    CHECK(rel < 1e-6);  // no sign ambiguity: odd power
}

TEST_CASE("spectral_init is deterministic in the seed") {
    InstanceConfig cfg{20, 2, 0.8, 0.05, 0.0, 47};
    const Instance inst = make_instance(cfg);
    const EstimatorParams params = default_params(20, 2, 0.8);
    const FactorMatrix a = spectral_init(inst.obs, 0.8, 2, params, 9);
    const FactorMatrix b = spectral_init(inst.obs, 0.8, 2, params, 9);
    CHECK(a.matrix() == b.matrix());
}

TEST_CASE("spectral_init lands near distinct true factors at moderate noise") {
    InstanceConfig cfg{50, 2, 0.5, 1e-3, 0.0, 53};
    const Instance inst = make_instance(cfg);
    const FactorMatrix U0 =
        spectral_init(inst.obs, 0.5, 2, default_params(50, 2, 0.5), 11);
    // exhaustive permutation alignment at r = 2
    const PermutationMap pm = align_permutation(U0, inst.truth);
    for (int l = 0; l < 2; ++l) {
        const double rel = (U0.column(pm.mapping[l]) - inst.truth.column(l)).norm() /
                           inst.truth.column(l).norm();
        CHECK(rel < 0.1);
    }
    CHECK(pm.mapping[0] != pm.mapping[1]);
}

TEST_CASE("gd_refine with t0 = 0 returns the input unchanged") {
    const auto obs = oracles::random_obs(6, 0.8, 59);
    const FactorMatrix U0(oracles::random_matrix(6, 2, 61));
    EstimatorParams params{4, 0.4, 1e-3, 0};
    const GdResult out = gd_refine(obs, U0, params);
    CHECK(out.factors.matrix() == U0.matrix());
    REQUIRE(out.loss_trajectory.size() == 1);
    CHECK(out.loss_trajectory[0] == Approx(loss(U0, obs)));
}

TEST_CASE("one gd step by hand") {
    Matrix m0(2, 1);
    m0 << 0.9, -0.4;
    const FactorMatrix U0(m0);
    const auto obs = oracles::random_obs(2, 1.0, 67);
    EstimatorParams params{1, 0.4, 3e-3, 1};
    const GdResult out = gd_refine(obs, U0, params);
    const Matrix expect = m0 - params.eta * gradient(U0, obs);
    CHECK((out.factors.matrix() - expect).norm() == Approx(0.0).margin(1e-15));
}

TEST_CASE("gd_refine reaches the noiseless optimum with a decreasing loss") {
    InstanceConfig cfg{30, 2, 0.5, 0.0, 0.0, 71};
    const Instance inst = make_instance(cfg);
    EstimatorParams params = default_params(30, 2, 0.5);
    params.eta = safe_eta(30, 0.5);
    params.t0 = 2500;
    const FactorMatrix U0 = spectral_init(inst.obs, 0.5, 2, params, 13);
    const GdResult out = gd_refine(inst.obs, U0, params);
    const PermutationMap pm = align_permutation(out.factors, inst.truth);
    CHECK(pm.residual / inst.truth.matrix().norm() < 1e-6);
    // monotone after the first iterations
    for (std::size_t t = 5; t + 1 < out.loss_trajectory.size(); ++t)
        CHECK(out.loss_trajectory[t + 1] <= out.loss_trajectory[t] * (1.0 + 1e-12));
}

TEST_CASE("gd_refine flags a divergent step size") {
    InstanceConfig cfg{20, 2, 1.0, 0.0, 0.0, 73};
    const Instance inst = make_instance(cfg);
    EstimatorParams params{4, 0.4, 0.5, 400};  // absurdly large step
    const FactorMatrix U0 = spectral_init(inst.obs, 1.0, 2, params, 15);
    CHECK_THROWS_AS(gd_refine(inst.obs, U0, params), NonFiniteError);
}

TEST_CASE("complete recovers exactly from full noiseless data") {
    InstanceConfig cfg{16, 2, 1.0, 0.0, 0.0, 79};
    const Instance inst = make_instance(cfg);
    EstimatorParams params = default_params(16, 2, 1.0);
    params.eta = safe_eta(16, 1.0);
    params.t0 = 2500;
    const Completion fit = complete(inst.obs, 2, params, 17);
    const PermutationMap pm = align_permutation(fit.factors, inst.truth);
    CHECK(pm.residual / inst.truth.matrix().norm() < 1e-6);
    CHECK(fit.loss_trajectory.back() <= fit.loss_trajectory.front());
    // tensor accessor serves cp_eval of the estimate
    const CanonicalTriple t = canonicalize(0, 1, 2, 16);
    CHECK(fit.tensor_at(t) == Approx(cp_eval(fit.factors, t)));
}

TEST_CASE("complete is reproducible") {
    InstanceConfig cfg{24, 2, 0.6, 0.05, 1.0, 83};
    const Instance inst = make_instance(cfg);
    EstimatorParams params = default_params(24, 2, 0.6);
    params.eta = safe_eta(24, 0.6);
    const Completion a = complete(inst.obs, 2, params, 19);
    const Completion b = complete(inst.obs, 2, params, 19);
    CHECK(a.factors.matrix() == b.factors.matrix());
}

TEST_CASE("complete meets the desk-scale accuracy target") {
    InstanceConfig cfg{100, 4, 0.2, 0.1, 5.0, 89};
    const Instance inst = make_instance(cfg);
    const Completion fit = complete(inst.obs, 4, default_params(100, 4, 0.2), 21);
    double num = 0.0, den = 0.0;
    for_each_canonical(100, [&](const CanonicalTriple& t) {
        const double a = cp_eval(fit.factors, t), b = cp_eval(inst.truth, t);
        num += t.multiplicity * (a - b) * (a - b);
        den += t.multiplicity * b * b;
    });
    CHECK(std::sqrt(num / den) < 0.05);
    CHECK(fit.loss_trajectory.back() <= fit.loss_trajectory.front());
}

TEST_CASE("candidate strengths are never negative") {
    for (std::uint64_t seed : {97u, 101u, 103u}) {
        const auto obs = oracles::random_obs(8, 0.5, seed, 0.6);
        const Matrix span = spectral_subspace(obs, 2);
        const Vector g = oracles::random_matrix(8, 1, seed ^ 0xaa).col(0);
        CHECK(retrieve_one_factor(obs, obs.p(), span, g).strength >= 0.0);
    }
}

TEST_CASE("negating a factor column changes the tensor estimate") {
    const FactorMatrix U(oracles::random_matrix(6, 2, 107));
    Matrix flipped = U.matrix();
    flipped.col(1) *= -1.0;
    const FactorMatrix V(flipped);
    bool any_differ = false;
    for_each_canonical(6, [&](const CanonicalTriple& t) {
        if (std::abs(cp_eval(U, t) - cp_eval(V, t)) > 0.0) any_differ = true;
    });
    CHECK(any_differ);
}
