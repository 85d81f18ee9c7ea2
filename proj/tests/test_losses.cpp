#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "awr/losses.hpp"
#include "awr/metrics.hpp"
#include "awr/rng.hpp"

using namespace awr;
using namespace awr::loss;
using nn::Tape;
using nn::Var;

namespace {

double mqrl_value(double pa, double pb, double ga, double gb, double margin) {
    Tape t;
    return t.scalar(mqrl(t, t.constant(pa), t.constant(pb), ga, gb, margin));
}

double mrl_value(double pa, double pb, double ga, double gb, double margin) {
    Tape t;
    return t.scalar(mrl(t, t.constant(pa), t.constant(pb), ga, gb, margin));
}

Tensor random_vec(int n, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    RandomStream rs = RandomStream::keyed(seed, "loss-vec");
    Tensor v({n});
    for (int i = 0; i < n; ++i) v[i] = rs.uniform(lo, hi);
    return v;
}

Tensor random_img(int h, int w, uint64_t seed) {
    RandomStream rs = RandomStream::keyed(seed, "loss-img");
    Tensor v({h, w, 3});
    for (int64_t i = 0; i < v.size(); ++i) v[i] = rs.uniform();
    return v;
}

// Central finite difference of a scalar graph w.r.t. element i of x0.
double fd_grad(const std::function<double(const Tensor&)>& f, const Tensor& x0, int64_t i,
               double step = 1e-5) {
    Tensor xp = x0, xm = x0;
    xp[i] += step;
    xm[i] -= step;
    return (f(xp) - f(xm)) / (2.0 * step);
}

}  // namespace

TEST_CASE("quality ranking loss values") {
    // signs agree: diff = |0.1 - 0.3| = 0.2, minus margin
    CHECK(mqrl_value(0.8, 0.5, 0.7, 0.6, 0.05) == doctest::Approx(0.15).epsilon(1e-12));
    // sign mismatch returns the raw distance
    CHECK(mqrl_value(0.4, 0.6, 0.7, 0.6, 0.05) == doctest::Approx(0.3).epsilon(1e-12));
    // margin absorbs a small interval error
    CHECK(mqrl_value(0.62, 0.5, 0.7, 0.6, 0.05) == doctest::Approx(0.0));
    // negative margin rejected
    Tape t;
    CHECK_THROWS_AS(mqrl(t, t.constant(0.5), t.constant(0.5), 0.5, 0.5, -0.1), ConfigError);
}

TEST_CASE("quality ranking loss properties") {
    RandomStream rs = RandomStream::keyed(31, "mqrl-prop");
    for (int trial = 0; trial < 200; ++trial) {
        double pa = rs.uniform(), pb = rs.uniform(), ga = rs.uniform(), gb = rs.uniform();
        double margin = rs.uniform(0.0, 0.2);
        double v = mqrl_value(pa, pb, ga, gb, margin);
        CHECK(v >= 0.0);
        // symmetric under swapping the pair jointly
        CHECK(mqrl_value(pb, pa, gb, ga, margin) == doctest::Approx(v).epsilon(1e-12));
        // zero iff signs compatible and interval error within the margin
        double din = pa - pb, dgt = ga - gb;
        bool compatible = std::fabs(dgt) < 1e-6 || std::fabs(din) < 1e-6 || ((dgt > 0) == (din > 0));
        bool expect_zero = compatible && std::fabs(dgt - din) <= margin;
        CHECK((v == 0.0) == expect_zero);
    }
}

TEST_CASE("margin ranking loss values and the interval blindness it causes") {
    // correctly ordered with gap beyond the margin
    CHECK(mrl_value(0.8, 0.3, 0.7, 0.6, 0.05) == 0.0);
    // reversed order is penalized
    CHECK(mrl_value(0.3, 0.8, 0.7, 0.6, 0.05) == doctest::Approx(0.55).epsilon(1e-12));

    // Two prediction sets rank a pair identically but with very different
    // intervals: the plain ranking loss scores both 0 while the quality
    // ranking loss separates them.
    double ga = 0.9, gb = 0.4;  // true gap 0.5
    double margin = 0.05;
    double mrl_wide = mrl_value(0.8, 0.3, ga, gb, margin);    // predicted gap 0.5
    double mrl_narrow = mrl_value(0.8, 0.74, ga, gb, margin); // predicted gap 0.06
    CHECK(mrl_wide == 0.0);
    CHECK(mrl_narrow == 0.0);
    double q_wide = mqrl_value(0.8, 0.3, ga, gb, margin);
    double q_narrow = mqrl_value(0.8, 0.74, ga, gb, margin);
    CHECK(q_wide == 0.0);
    CHECK(q_narrow >= margin);
    CHECK(std::fabs(q_narrow - q_wide) >= margin);
}

TEST_CASE("direct regression loss") {
    Tape t;
    CHECK(t.scalar(direct_iqa(t, t.constant(0.4), 0.4)) == 0.0);
    CHECK(t.scalar(direct_iqa(t, t.constant(0.2), 0.7)) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("ranking loss gradients match finite differences away from kinks") {
    RandomStream rs = RandomStream::keyed(32, "rank-grad");
    int checked = 0;
    for (int trial = 0; trial < 60 && checked < 20; ++trial) {
        double pa = rs.uniform(0.05, 0.95), pb = rs.uniform(0.05, 0.95);
        double ga = rs.uniform(), gb = rs.uniform();
        double margin = 0.05;
        double din = pa - pb, dgt = ga - gb;
        // stay away from the non-smooth loci: sign flips and the margin edge
        if (std::fabs(din) < 2e-2 || std::fabs(dgt) < 2e-2) continue;
        if (std::fabs(std::fabs(dgt - din) - margin) < 2e-2) continue;
        ++checked;

        for (int which = 0; which < 3; ++which) {
            auto f = [&](const Tensor& x) {
                Tape t;
                Var a = t.input(Tensor::scalar(x[0]));
                Var b = t.input(Tensor::scalar(x[1]));
                switch (which) {
                    case 0: return t.scalar(mqrl(t, a, b, ga, gb, margin));
                    case 1: return t.scalar(mrl(t, a, b, ga, gb, margin));
                    default: return t.scalar(direct_iqa(t, a, ga));
                }
            };
            Tensor x({2}, {pa, pb});
            Tape t;
            Var a = t.input(Tensor::scalar(pa));
            Var b = t.input(Tensor::scalar(pb));
            Var lossv = which == 0   ? mqrl(t, a, b, ga, gb, margin)
                        : which == 1 ? mrl(t, a, b, ga, gb, margin)
                                     : direct_iqa(t, a, ga);
            t.backward(lossv);
            for (int64_t i = 0; i < 2; ++i) {
                double num = fd_grad(f, x, i);
                double ana = i == 0 ? t.grad(a)[0] : t.grad(b)[0];
                CHECK(std::fabs(num - ana) <= 1e-4 * std::max({1.0, std::fabs(num), std::fabs(ana)}));
            }
        }
    }
    CHECK(checked == 20);
}

TEST_CASE("contrastive loss values") {
    SUBCASE("equal similarities with three negatives give ln 4") {
        Tensor v = random_vec(8, 1);
        Tape t;
        Var a = t.input(v), p = t.input(v);
        std::vector<Var> negs = {t.input(v), t.input(v), t.input(v)};
        CHECK(t.scalar(contrastive(t, a, p, negs, 0.25)) ==
              doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
    SUBCASE("saturated case is ~0") {
        Tensor v = random_vec(8, 2);
        Tensor neg(v.dims());
        for (int64_t i = 0; i < v.size(); ++i) neg[i] = -v[i];
        Tape t;
        Var a = t.input(v);
        Var p = t.input(v);
        std::vector<Var> negs = {t.input(neg), t.input(neg), t.input(neg), t.input(neg), t.input(neg)};
        CHECK(t.scalar(contrastive(t, a, p, negs, 0.07)) == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("matches a scalar softmax oracle on random unit vectors") {
        Tape t;
        Tensor av = random_vec(16, 3);
        Var a = t.input(av);
        Tensor pv = random_vec(16, 4);
        Var p = t.input(pv);
        std::vector<Var> negs;
        std::vector<Tensor> negts;
        for (int j = 0; j < 5; ++j) {
            negts.push_back(random_vec(16, 5 + static_cast<uint64_t>(j)));
            negs.push_back(t.input(negts.back()));
        }
        double tau = 0.25;
        auto cosv = [](const Tensor& x, const Tensor& y) {
            double d = 0, nx = 0, ny = 0;
            for (int64_t i = 0; i < x.size(); ++i) {
                d += x[i] * y[i];
                nx += x[i] * x[i];
                ny += y[i] * y[i];
            }
            return d / (std::sqrt(nx) * std::sqrt(ny));
        };
        double num = std::exp(cosv(av, pv) / tau);
        double den = num;
        for (const auto& nv : negts) den += std::exp(cosv(av, nv) / tau);
        double expect = -std::log(num / den);
        CHECK(t.scalar(contrastive(t, a, p, negs, tau)) == doctest::Approx(expect).epsilon(1e-6));
    }
    SUBCASE("invariant to positive rescaling of any input") {
        Tensor av = random_vec(12, 7), pv = random_vec(12, 8), nv = random_vec(12, 9);
        auto value = [&](double sa, double sp, double sn) {
            Tape t;
            Tensor a2 = av, p2 = pv, n2 = nv;
            for (int64_t i = 0; i < a2.size(); ++i) {
                a2[i] *= sa;
                p2[i] *= sp;
                n2[i] *= sn;
            }
            std::vector<Var> negs = {t.input(n2)};
            return t.scalar(contrastive(t, t.input(a2), t.input(p2), negs, 0.25));
        };
        double base = value(1, 1, 1);
        CHECK(value(3.7, 1, 1) == doctest::Approx(base).epsilon(1e-9));
        CHECK(value(1, 0.01, 1) == doctest::Approx(base).epsilon(1e-9));
        CHECK(value(1, 1, 250.0) == doctest::Approx(base).epsilon(1e-9));
    }
    SUBCASE("zero-norm vector rejected") {
        Tape t;
        Var a = t.input(Tensor::zeros({4}));
        Var p = t.input(random_vec(4, 10));
        std::vector<Var> negs = {t.input(random_vec(4, 11))};
        CHECK_THROWS_AS(contrastive(t, a, p, negs, 0.25), NumericError);
    }
    SUBCASE("gradient matches finite differences") {
        Tensor av = random_vec(10, 12), pv = random_vec(10, 13), nv = random_vec(10, 14);
        auto f = [&](const Tensor& x) {
            Tape t;
            std::vector<Var> negs = {t.input(nv)};
            return t.scalar(contrastive(t, t.input(x), t.input(pv), negs, 0.25));
        };
        Tape t;
        Var a = t.input(av);
        std::vector<Var> negs = {t.input(nv)};
        t.backward(contrastive(t, a, t.input(pv), negs, 0.25));
        RandomStream rs = RandomStream::keyed(15, "cl-grad");
        for (int k = 0; k < 5; ++k) {
            int64_t i = rs.uniform_int(10);
            double num = fd_grad(f, av, i);
            double ana = t.grad(a)[i];
            CHECK(std::fabs(num - ana) <= 1e-6 * std::max({1.0, std::fabs(num)}));
        }
    }
}

TEST_CASE("pixel losses") {
    SUBCASE("l1 basics and oracle") {
        Tape t;
        Tensor a = random_img(6, 6, 20);
        CHECK(t.scalar(l1(t, t.input(a), t.input(a))) == 0.0);
        CHECK(t.scalar(l1(t, t.input(Tensor::zeros({4, 4, 3})), t.input(Tensor::full({4, 4, 3}, 1.0)))) ==
              doctest::Approx(1.0));
        Tensor b = random_img(6, 6, 21);
        double expect = 0.0;
        for (int64_t i = 0; i < a.size(); ++i) expect += std::fabs(a[i] - b[i]);
        expect /= static_cast<double>(a.size());
        CHECK(t.scalar(l1(t, t.input(a), t.input(b))) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("ssim loss agrees with the metric and stays in [0,2]") {
        Tensor a = random_img(16, 16, 22);
        Tensor b = random_img(16, 16, 23);
        Tape t;
        CHECK(t.scalar(ssim_loss(t, t.input(a), t.input(a))) == doctest::Approx(0.0).epsilon(1e-12));
        double lv = t.scalar(ssim_loss(t, t.input(a), t.input(b)));
        CHECK(lv >= 0.0);
        CHECK(lv <= 2.0);
        CHECK(lv == doctest::Approx(1.0 - metrics::ssim(a, b)).epsilon(1e-9));
    }
    SUBCASE("perceptual loss: zero at equality, positive otherwise, matches stage oracle") {
        FeaturePyramid pyr(99);
        Tensor a = random_img(16, 16, 24);
        Tensor b = random_img(16, 16, 25);
        Tape t;
        CHECK(t.scalar(perceptual(t, t.input(a), t.input(a), pyr)) == 0.0);
        double lv = t.scalar(perceptual(t, t.input(a), t.input(b), pyr));
        CHECK(lv > 0.0);

        // loop oracle: run the frozen stages with plain convolution loops
        auto run_stage = [&](const Tensor& img, int stage) {
            const Tensor& w = pyr.weight(stage);
            const Tensor& bias = pyr.bias(stage);
            int h = img.dim(0), wd = img.dim(1), cin = img.dim(2), cout = w.dim(3);
            int oh = (h + 2 - 3) / 2 + 1, ow = (wd + 2 - 3) / 2 + 1;
            Tensor out({oh, ow, cout});
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    for (int oc = 0; oc < cout; ++oc) {
                        double s = bias[oc];
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx)
                                for (int ci = 0; ci < cin; ++ci) {
                                    int y = oy * 2 - 1 + ky, x = ox * 2 - 1 + kx;
                                    if (y < 0 || y >= h || x < 0 || x >= wd) continue;
                                    s += img.at(y, x, ci) * w[((ky * 3 + kx) * cin + ci) * cout + oc];
                                }
                        out.at(oy, ox, oc) = s > 0 ? s : 0.2 * s;
                    }
            return out;
        };
        double expect = 0.0;
        Tensor xa = a, xb = b;
        for (int s = 0; s < pyr.stages(); ++s) {
            xa = run_stage(xa, s);
            xb = run_stage(xb, s);
            double stage_sum = 0.0;
            for (int64_t i = 0; i < xa.size(); ++i) stage_sum += (xa[i] - xb[i]) * (xa[i] - xb[i]);
            expect += stage_sum / static_cast<double>(xa.size());
        }
        CHECK(lv == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("total loss composition") {
    Tape t;
    LossWeights w;
    SUBCASE("all zero components give zero") {
        LossTerms terms;
        terms.mqrl = t.constant(0.0);
        terms.cl = t.constant(0.0);
        terms.l1 = t.constant(0.0);
        terms.ssim = t.constant(0.0);
        terms.perceptual = t.constant(0.0);
        CHECK(t.scalar(total_loss(t, terms, w)) == 0.0);
    }
    SUBCASE("weights (0,1,0,0) reduce to rank loss plus l1") {
        LossWeights w2;
        w2.cl = 0.0;
        w2.l1 = 1.0;
        w2.ssim = 0.0;
        w2.perceptual = 0.0;
        LossTerms terms;
        terms.mqrl = t.constant(0.3);
        terms.cl = t.constant(10.0);
        terms.l1 = t.constant(0.2);
        terms.ssim = t.constant(10.0);
        terms.perceptual = t.constant(10.0);
        CHECK(t.scalar(total_loss(t, terms, w2)) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("linear in each component (two-point check)") {
        auto tot = [&](double cl_v) {
            LossTerms terms;
            terms.mqrl = t.constant(0.1);
            terms.cl = t.constant(cl_v);
            terms.l1 = t.constant(0.0);
            return t.scalar(total_loss(t, terms, w));
        };
        double t0 = tot(0.0), t1 = tot(1.0), t2 = tot(2.0);
        CHECK(t2 - t1 == doctest::Approx(t1 - t0).epsilon(1e-12));
        CHECK(t1 - t0 == doctest::Approx(w.cl).epsilon(1e-12));
    }
    SUBCASE("negative weights rejected") {
        LossWeights bad;
        bad.ssim = -0.1;
        LossTerms terms;
        terms.l1 = t.constant(0.0);
        CHECK_THROWS_AS(total_loss(t, terms, bad), ConfigError);
    }
}

TEST_CASE("ssim and perceptual losses have finite-difference-consistent gradients") {
    Tensor a = random_img(14, 14, 30);
    Tensor b = random_img(14, 14, 31);
    FeaturePyramid pyr(7);
    RandomStream rs = RandomStream::keyed(77, "pix-grad");

    SUBCASE("ssim") {
        auto f = [&](const Tensor& x) {
            Tape t;
            return t.scalar(ssim_loss(t, t.input(x), t.input(b)));
        };
        Tape t;
        Var av = t.input(a);
        t.backward(ssim_loss(t, av, t.input(b)));
        for (int k = 0; k < 8; ++k) {
            int64_t i = rs.uniform_int(static_cast<int>(a.size()));
            double num = fd_grad(f, a, i);
            double ana = t.grad(av)[i];
            CHECK(std::fabs(num - ana) <= 1e-5 * std::max({1.0, std::fabs(num)}));
        }
    }
    SUBCASE("perceptual") {
        auto f = [&](const Tensor& x) {
            Tape t;
            return t.scalar(perceptual(t, t.input(x), t.input(b), pyr));
        };
        Tape t;
        Var av = t.input(a);
        t.backward(perceptual(t, av, t.input(b), pyr));
        for (int k = 0; k < 8; ++k) {
            int64_t i = rs.uniform_int(static_cast<int>(a.size()));
            double num = fd_grad(f, a, i);
            double ana = t.grad(av)[i];
            CHECK(std::fabs(num - ana) <= 1e-5 * std::max({1.0, std::fabs(num)}));
        }
    }
}
