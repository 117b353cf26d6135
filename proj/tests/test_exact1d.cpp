#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include "oracles.hpp"

using namespace clg;

TEST(Exact1d, TableAtThreeQuarters) {
    const auto o = exact1d::observables(0.75);
    EXPECT_DOUBLE_EQ(o.rhoA, 2.0 / 3);
    EXPECT_DOUBLE_EQ(o.activity, 1.0 / 3);
    EXPECT_DOUBLE_EQ(o.D, 16.0 / 9);
    EXPECT_DOUBLE_EQ(o.chi, 0.09375);
    EXPECT_DOUBLE_EQ(o.sigma, 1.0 / 6);
    EXPECT_DOUBLE_EQ(o.xiCross, 1 / std::log(3.0));
    EXPECT_DOUBLE_EQ(o.xiPerp, 1.5);
    EXPECT_DOUBLE_EQ(exact1d::correlation(0.75, 1), -0.0625);
    EXPECT_DOUBLE_EQ(exact1d::correlation(0.75, -1), -0.0625);
}

TEST(Exact1d, ClosedFormsMatchMarkovChainOracle) {
    for (double rho = 0.51; rho < 0.995; rho += 0.02) {
        const auto o = exact1d::observables(rho);
        const oracle::Chain1d chain(rho);
        EXPECT_NEAR(o.rhoA, chain.rhoA(), 1e-12) << rho;
        EXPECT_NEAR(o.activity, chain.activity(), 1e-12) << rho;
        EXPECT_NEAR(o.sigma, chain.activity() / 2, 1e-12) << rho;
        EXPECT_NEAR(o.chi, chain.chi(), 1e-10) << rho;
        for (int r = 0; r < 6; ++r) EXPECT_NEAR(exact1d::correlation(rho, r), chain.phi(r), 1e-12);
        EXPECT_NEAR(o.xiCross, -1 / std::log(std::abs(chain.phi(2) / chain.phi(1))), 1e-7 * o.xiCross) << rho;
        const double h = 1e-5;
        const double D = (oracle::Chain1d(rho + h).rhoA() - oracle::Chain1d(rho - h).rhoA()) / (2 * h);
        EXPECT_NEAR(o.D, D, 1e-6) << rho;
    }
}

TEST(Exact1d, EinsteinRelationHoldsOnFineGrid) {
    for (int k = 1; k <= 1000; ++k) {
        const double rho = 0.5 + 0.5 * k / 1000.0;
        const auto o = exact1d::observables(rho);
        EXPECT_LT(std::abs(o.sigma - o.D * o.chi), 1e-12) << rho;
    }
}

TEST(Exact1d, OutsideSupercriticalRangeIsADomainError) {
    EXPECT_THROW(exact1d::observables(0.5), std::domain_error);
    EXPECT_THROW(exact1d::observables(1.2), std::domain_error);
    EXPECT_THROW(exact1d::correlation(0.3, 1), std::domain_error);
}

TEST(Exact1d, MarginalMatchesChainOnEveryShortPattern) {
    for (double rho : {0.55, 0.7, 0.9}) {
        const oracle::Chain1d chain(rho);
        for (int len = 1; len <= 8; ++len) {
            double total = 0;
            for (int m = 0; m < (1 << len); ++m) {
                std::vector<std::uint8_t> pat(len);
                std::vector<int> w(len);
                for (int k = 0; k < len; ++k) pat[k] = w[k] = (m >> k) & 1;
                const double p = exact1d::marginal(rho, pat);
                EXPECT_NEAR(p, chain.word(w), 1e-12);
                EXPECT_EQ(p > 0, exact1d::isErgodic(pat));
                total += p;
            }
            EXPECT_NEAR(total, 1.0, 1e-12);
        }
    }
}

TEST(Exact1d, SamplerReproducesWindowFrequencies) {
    const double rho = 0.65;
    Rng rng(21);
    const auto eta = exact1d::samplePiRho(rho, 400000, rng);
    std::vector<double> obs(8, 0), exp(8, 0);
    double n = 0;
    for (std::size_t i = 0; i + 3 <= eta.size(); i += 3, ++n) obs[eta[i] | eta[i + 1] << 1 | eta[i + 2] << 2] += 1;
    std::vector<double> o, e;
    for (int m = 0; m < 8; ++m) {
        const double p = exact1d::marginal(rho, {std::uint8_t(m & 1), std::uint8_t(m >> 1 & 1), std::uint8_t(m >> 2 & 1)});
        if (p == 0) {
            EXPECT_EQ(obs[m], 0) << m;
            continue;
        }
        o.push_back(obs[m]);
        e.push_back(p * n);
    }
    double x = 0;
    for (std::size_t k = 0; k < o.size(); ++k) x += (o[k] - e[k]) * (o[k] - e[k]) / e[k];
    boost::math::chi_squared dist(static_cast<double>(o.size() - 1));
    EXPECT_GT(boost::math::cdf(boost::math::complement(dist, x)), 1e-3);
}

TEST(Exact1d, SampledCorrelationsDecayAtTheExactRate) {
    const double rho = 0.7;
    auto g = makeGeometry(1, 2048);
    Rng rng(4);
    std::vector<Configuration> samples;
    for (int k = 0; k < 200; ++k) samples.emplace_back(g, exact1d::samplePiRhoRing(rho, 2048, rng));
    const auto prof = twoPointCorrelation(samples, 12);
    for (int r = 0; r <= 6; ++r)
        EXPECT_NEAR(prof.axisPhi[r], exact1d::correlation(rho, r), 5 * prof.axisError[r] + 2e-4) << r;
    const auto fit = xiCrossFit(prof, 1, 8);
    EXPECT_TRUE(fit.alternating);
    EXPECT_NEAR(fit.xi.value, exact1d::observables(rho).xiCross, 0.05);
}

TEST(Exact1d, ExponentSetSatisfiesEveryRelation) {
    const auto e = exact1d::exponents();
    const auto rep = relationCheck(e, 1);
    ASSERT_GE(rep.residuals.size(), 4u);
    for (const auto& r : rep.residuals) {
        EXPECT_EQ(r.value.value, 0.0) << r.name;
        EXPECT_FALSE(r.flagged) << r.name;
    }
}
