#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "leaflet/error.hpp"
#include "leaflet/fusion.hpp"

namespace leaflet::fusion {
namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(Softmax, ConstantVectorIsUniform) {
    for (const double c : {-1e6, -3.0, 0.0, 7.5, 1e6}) {
        const std::vector<double> s{c, c, c};
        for (const double p : softmax(s)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
    }
}

TEST(Softmax, ClosedForm) {
    const std::vector<double> s{std::log(2.0), 0.0};
    const auto p = softmax(s);
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndStability) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 5.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> s(12), shifted(12);
        const double c = n(rng) * 100;
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = n(rng);
            shifted[i] = s[i] + c;
        }
        const auto a = softmax(s);
        const auto b = softmax(shifted);
        for (std::size_t i = 0; i < s.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
        ASSERT_NEAR(sum(a), 1.0, 1e-12);
    }
    const std::vector<double> huge{1000.0, 0.0};
    EXPECT_EQ(softmax(huge)[0], 1.0);
}

TEST(Softmax, RejectsEmptyAndNonFinite) {
    EXPECT_THROW(softmax(std::vector<double>{}), PreconditionError);
    EXPECT_THROW(softmax(std::vector<double>{1.0, NAN}), PreconditionError);
    EXPECT_THROW(softmax(std::vector<double>{INFINITY, 0.0}), PreconditionError);
}

TEST(Fuse, EqualInputsAreFixed) {
    const std::vector<double> p{0.2, 0.5, 0.3};
    for (const double w : {0.1, 1.0, 2.0, 50.0}) {
        const auto f = fuse(p, p, w);
        for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(f[i], p[i], 1e-15);
    }
}

TEST(Fuse, HandEvaluatedExamples) {
    const auto half = fuse(std::vector<double>{1, 0}, std::vector<double>{0, 1}, 1.0);
    EXPECT_DOUBLE_EQ(half[0], 0.5);
    EXPECT_DOUBLE_EQ(half[1], 0.5);
    // ((0.6 + 3 * 0.2) / 4, (0.4 + 3 * 0.8) / 4)
    const auto f = fuse(std::vector<double>{0.6, 0.4}, std::vector<double>{0.2, 0.8}, 3.0);
    EXPECT_NEAR(f[0], 0.3, 1e-15);
    EXPECT_NEAR(f[1], 0.7, 1e-15);
}

TEST(Fuse, Errors) {
    EXPECT_THROW(fuse(std::vector<double>{1, 0}, std::vector<double>{1}, 1.0), PreconditionError);
    EXPECT_THROW(fuse(std::vector<double>{1, 0}, std::vector<double>{1, 0}, 0.0), PreconditionError);
    EXPECT_THROW(fuse(std::vector<double>{1, 0}, std::vector<double>{1, 0}, -1.0), PreconditionError);
}

TEST(Confidence, AgreementRule) {
    const std::vector<double> a{0.9, 0.1};
    const std::vector<double> b{0.1, 0.9};
    const std::vector<double> u{0.5, 0.5};
    EXPECT_EQ(label_confidence(a, a), Confidence::high);
    EXPECT_EQ(label_confidence(a, b), Confidence::low);
    EXPECT_EQ(label_confidence(u, u), Confidence::high);
    EXPECT_EQ(to_string(Confidence::low), "low");
    EXPECT_EQ(confidence_from_string("high"), Confidence::high);
    EXPECT_THROW(confidence_from_string("medium"), PreconditionError);
}

TEST(Argmax, TiesGoToLowestIndex) {
    EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
    EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
}

TEST(TopK, Examples) {
    const std::vector<double> p{0.1, 0.7, 0.2};
    const auto two = top_k(p, 2);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two[0].class_id, 1);
    EXPECT_DOUBLE_EQ(two[0].probability, 0.7);
    EXPECT_EQ(two[1].class_id, 2);

    const auto tie = top_k(std::vector<double>{0.5, 0.5}, 1);
    EXPECT_EQ(tie[0].class_id, 0);

    const auto full = top_k(p, 3);
    std::vector<int> ids;
    for (const auto& r : full) ids.push_back(r.class_id);
    EXPECT_EQ(ids, (std::vector<int>{1, 2, 0}));
    EXPECT_THROW(top_k(p, 0), PreconditionError);
    EXPECT_THROW(top_k(p, 4), PreconditionError);
}

TEST(Combine, RecordInvariants) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> img(7), txt(7);
        for (auto& v : img) v = n(rng);
        for (auto& v : txt) v = std::abs(n(rng));
        const auto r = combine("x", img, txt, 2.0, 3);
        for (const auto* v : {&r.p_image, &r.p_text, &r.p_combined}) {
            ASSERT_EQ(v->size(), 7u);
            ASSERT_NEAR(sum(*v), 1.0, 1e-9);
            for (const double p : *v) ASSERT_GE(p, 0.0);
        }
        ASSERT_EQ(r.predicted_class, static_cast<int>(argmax(r.p_combined)));
        ASSERT_EQ(r.confidence == Confidence::high, argmax(r.p_image) == argmax(r.p_text));
        ASSERT_EQ(r.top_k.size(), 3u);
        ASSERT_EQ(r.top_k.front().class_id, r.predicted_class);
        for (std::size_t i = 1; i < r.top_k.size(); ++i)
            ASSERT_GE(r.top_k[i - 1].probability, r.top_k[i].probability);
    }
}

TEST(Combine, TextProbabilitiesAreSoftmaxedAgain) {
    const std::vector<double> img{0.0, 0.0};
    const std::vector<double> txt{1.0, 0.0};
    const auto r = combine("x", img, txt, 2.0);
    EXPECT_NEAR(r.p_text[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
    EXPECT_EQ(r.top_k.size(), 2u);  // k is capped at the class count
}

}  // namespace
}  // namespace leaflet::fusion
