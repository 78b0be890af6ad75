#include <gtest/gtest.h>

#include <random>

#include "bosonic/channels.hpp"
#include "bosonic/mixture.hpp"
#include "bosonic/special.hpp"
#include "bosonic/states.hpp"

using namespace bosonic;

namespace {

RVec pt(double q, double p) {
    RVec x(2);
    x << q, p;
    return x;
}
CVec cv(cplx a, cplx b) {
    CVec x(2);
    x << a, b;
    return x;
}

RMat random_pd(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g;
    RMat a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    return a * a.transpose() + 0.3 * RMat::Identity(n, n);
}

}  // namespace

TEST(EvalGaussian, VacuumAtOrigin) {
    EXPECT_NEAR(eval_gaussian(CVec::Zero(2), CMat::Identity(2, 2), pt(0, 0)).real(), 1 / (2 * kPi), 1e-15);
}

TEST(EvalGaussian, ImaginaryMeanByHand) {
    // hbar = 2: mean (2i, 0), Sigma = 1. (x - mu)^2 = (-2i)^2 = -4, so G = e^{2} / (2 pi).
    const cplx v = eval_gaussian(cv(cplx(0, 2), 0), CMat::Identity(2, 2), pt(0, 0));
    EXPECT_NEAR(v.real(), std::exp(2.0) / (2 * kPi), 1e-13);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
}

TEST(EvalGaussian, SqueezedPeakHeightIndependentOfR) {
    for (double hbar : {1.0, 2.0, 3.5})
        for (double r : {0.0, 0.4, 1.3}) {
            CMat c = CMat::Zero(2, 2);
            c(0, 0) = hbar * std::exp(-2 * r) / 2;
            c(1, 1) = hbar * std::exp(2 * r) / 2;
            EXPECT_NEAR(eval_gaussian(CVec::Zero(2), c, pt(0, 0)).real(), 1 / (kPi * hbar), 1e-14);
        }
}

TEST(EvalGaussian, SingularThrows) {
    EXPECT_THROW(eval_gaussian(CVec::Zero(2), CMat::Zero(2, 2), pt(0, 0)), SingularCovariance);
}

TEST(Overlap, Examples) {
    const CMat I = CMat::Identity(2, 2);
    EXPECT_NEAR(gaussian_overlap_integral(CVec::Zero(2), I, CVec::Zero(2), I).real(), 1 / (4 * kPi), 1e-15);
    const double d = 1.7;
    EXPECT_NEAR(gaussian_overlap_integral(CVec::Zero(2), I, cv(d, 0), I).real(), std::exp(-d * d / 4) / (4 * kPi), 1e-15);
    const CVec m1 = cv(0.3, cplx(0.1, 0.4));
    const CVec m2 = cv(-1.0, 0.2);
    CMat c1 = 2.0 * I;
    c1(0, 1) = c1(1, 0) = cplx(0.1, 0.05);
    const cplx ab = gaussian_overlap_integral(m1, c1, m2, I), ba = gaussian_overlap_integral(m2, I, m1, c1);
    EXPECT_NEAR(std::abs(ab - ba), 0.0, 1e-15);
}

TEST(Overlap, MatchesQuadratureOnRandomInputs) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 5; ++trial) {
        const CMat c1 = random_pd(rng, 2).cast<cplx>(), c2 = random_pd(rng, 2).cast<cplx>();
        const CVec m1 = cv(g(rng), g(rng)), m2 = cv(g(rng), g(rng));
        const cplx exact = gaussian_overlap_integral(m1, c1, m2, c2);
        // trapezoid rule on a wide grid; the integrand is smooth and decays fast
        const int n = 601;
        const double L = 14.0, h = 2 * L / (n - 1);
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const RVec x = pt(-L + i * h, -L + j * h);
                acc += (eval_gaussian(m1, c1, x) * eval_gaussian(m2, c2, x)).real();
            }
        acc *= h * h;
        EXPECT_NEAR(acc / exact.real(), 1.0, 1e-6);
    }
}

TEST(Wigner, VacuumOrigin) { EXPECT_NEAR(wigner(vacuum(1, 2.0), pt(0, 0)).real(), 1 / (2 * kPi), 1e-15); }

TEST(Wigner, CatOriginMatchesDirectFormula) {
    const double a = 2.0, hbar = 2.0;
    const State even = cat({a, 0.0}, hbar);
    // |a>+|-a> Wigner at the origin: two far lobes plus the fringe term 2 e^{0}/(pi hbar) normalized
    const double N = 1 / (2 * (1 + std::exp(-2 * a * a)));
    const double lobes = 2 * N * std::exp(-2 * a * a) / (kPi * hbar);
    const double fringe = 2 * N / (kPi * hbar);
    const cplx w = wigner(even, pt(0, 0));
    EXPECT_NEAR(w.real(), lobes + fringe, 1e-14);
    EXPECT_NEAR(w.imag(), 0.0, 1e-15);
}

TEST(Wigner, OddCatNegativeAtOrigin) {
    EXPECT_LT(wigner(cat({2.0, 1.0}, 2.0), pt(0, 0)).real(), 0.0);
    EXPECT_LT(wigner(cat({0.5, 1.0}, 2.0), pt(0, 0)).real(), 0.0);
}

TEST(Tensor, PeakCounts) {
    const State v = tensor(vacuum(), vacuum());
    EXPECT_EQ(v.size(), 1u);
    EXPECT_EQ(v.num_modes(), 2);
    EXPECT_TRUE(v.cov(0).isApprox(CMat::Identity(4, 4)));
    const State c = cat({2.0, 0.0});
    EXPECT_EQ(tensor(c, vacuum()).size(), 4u);
    const State cc = tensor(c, c);
    EXPECT_EQ(cc.size(), 16u);
    EXPECT_EQ(cc.covs().size(), 1u);
    EXPECT_THROW(tensor(vacuum(1, 2.0), vacuum(1, 1.0)), HbarMismatch);
}

TEST(Tensor, BothOrdersAgreeAfterSwap) {
    const State a = cat({1.5, 0.0}), b = cat({cplx(0.3, 0.8), 1.0});
    const State ab = tensor(a, b), ba = tensor(b, a);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 20; ++i) {
        RVec x(4), y(4);
        x << u(rng), u(rng), u(rng), u(rng);
        y << x(2), x(3), x(0), x(1);
        EXPECT_NEAR(std::abs(wigner(ab, x) - wigner(ba, y)), 0.0, 1e-14);
    }
}

TEST(PartialTrace, Examples) {
    const State v = partial_trace(tensor(vacuum(), vacuum()), {0});
    EXPECT_EQ(v.num_modes(), 1);
    EXPECT_TRUE(v.cov(0).isApprox(CMat::Identity(2, 2)));
    EXPECT_THROW(partial_trace(v, {}), InvalidModes);
    EXPECT_THROW(partial_trace(v, {3}), InvalidModes);

    // CZ(1) on vacuum x vacuum: mode A p-variance grows by s^2 * Var(q_B) = 1
    const State cz = apply_symplectic(tensor(vacuum(), vacuum()), cz_symplectic(1.0), {0, 1});
    const State a = partial_trace(cz, {0});
    EXPECT_NEAR(a.cov(0)(0, 0).real(), 1.0, 1e-15);
    EXPECT_NEAR(a.cov(0)(1, 1).real(), 2.0, 1e-15);

    const State sq = squeezed(0.4, 0.3);
    const State three = tensor(tensor(sq, sq), sq);
    const State one = partial_trace(three, {1});
    for (double q : {-1.0, 0.2, 1.3}) EXPECT_NEAR(std::abs(wigner(one, pt(q, 0.4)) - wigner(sq, pt(q, 0.4))), 0.0, 1e-14);
}

TEST(PartialTrace, TensorRoundTrip) {
    const State a = cat({cplx(1.2, -0.4), 0.5}), b = fock({2, 0.1});
    const State back = partial_trace(tensor(a, b), {0});
    for (double q = -3; q <= 3; q += 0.5)
        for (double p = -3; p <= 3; p += 0.5) EXPECT_NEAR(std::abs(wigner(back, pt(q, p)) - wigner(a, pt(q, p))), 0.0, 1e-10);
}

TEST(Prune, Examples) {
    const State c = cat({2.0, 0.0});
    const State same = prune(c, 0.0);
    EXPECT_EQ(same.size(), c.size());

    const State one = coherent(0.3);
    EXPECT_EQ(prune(one, 0.9).size(), 1u);

    // at eps = 0.1 the corner of a |k|,|l| <= 10 lattice still sits at ~1e-7 relative weight,
    // so the far peaks only fall below 1e-12 on a wider lattice
    GkpParams g;
    g.epsilon = 0.1;
    g.dust = 0.0;
    for (int cutoff : {10, 20}) {
        g.cutoff = cutoff;
        const State full = gkp(g);
        const State p = prune(full, 1e-12);
        EXPECT_NEAR(std::abs(p.total_weight() - 1.0), 0.0, 1e-12);
        EXPECT_LT(p.diag.pruned_mass, 1e-10);
        if (cutoff == 20) {
            EXPECT_LT(p.size(), full.size());
            EXPECT_GT(p.diag.pruned_mass, 0.0);
        }
    }
    EXPECT_THROW(prune(one, -1.0), InvalidParameter);
}

TEST(Ldlt, ComplexSymmetricDeterminantAndInverse) {
    CMat a(3, 3);
    a << cplx(2, 0.3), cplx(0.1, -0.2), 0.3, cplx(0.1, -0.2), cplx(1.5, -0.4), cplx(0, 0.1), 0.3, cplx(0, 0.1), 1.0;
    SymLDLT f(a);
    EXPECT_LT((f.inverse() * a - CMat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-14);
    const cplx det = (2 * kPi * a).determinant();
    EXPECT_NEAR(std::abs(std::exp(2.0 * f.log_sqrt_det_2pi()) - det) / std::abs(det), 0.0, 1e-13);
}

TEST(Faddeeva, AgreesWithRealErfcAndSymmetry) {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5, 6.0}) EXPECT_NEAR(erfc_complex(x).real(), std::erfc(x), 2e-14);
    // erfc(conj z) = conj erfc(z)
    const cplx z(0.7, 1.9);
    EXPECT_NEAR(std::abs(erfc_complex(std::conj(z)) - std::conj(erfc_complex(z))), 0.0, 1e-13);
    // w(iy) = e^{y^2} erfc(y) for y > 0
    for (double y : {0.1, 1.0, 5.0, 20.0}) EXPECT_NEAR(faddeeva_upper(cplx(0, y)).real() / (std::exp(y * y) * std::erfc(y)), 1.0, 1e-12);
}

TEST(Faddeeva, ComplexTermCdfAgainstQuadrature) {
    const cplx lw(-0.3, 0.4), mu(0.5, 1.2), v(0.8, 0.0);
    const double x = 0.9;
    // Simpson's rule
    const int n = 20001;
    const double a = -20, h = (x - a) / (n - 1);
    cplx acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = a + i * h;
        const cplx f = std::exp(lw - 0.5 * (t - mu) * (t - mu) / v) / std::sqrt(2 * kPi * v);
        acc += (i == 0 || i == n - 1 ? 1.0 : (i % 2 ? 4.0 : 2.0)) * f;
    }
    acc *= h / 3;
    EXPECT_NEAR(std::abs(gaussian_term_cdf(lw, mu, v, x) - acc), 0.0, 1e-9);
}

TEST(Physicality, ReportsOnCorpus) {
    for (const State& s : {vacuum(), cat({2.0, 1.0}), fock({3, 0.1}), squeezed(0.5, 1.0)}) {
        const auto r = check_physicality(s);
        EXPECT_TRUE(r.covariances_ok);
        EXPECT_NEAR(std::abs(r.total_weight - 1.0), 0.0, 1e-10);
    }
}

TEST(MergeDuplicates, CatAtZeroCollapsesToVacuum) {
    const State z = merge_duplicates(cat({0.0, 0.0}));
    EXPECT_EQ(z.size(), 1u);
    EXPECT_NEAR(std::abs(z.peaks()[0].weight() - 1.0), 0.0, 1e-15);
}
