#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "leaflet/error.hpp"
#include "leaflet/text_model.hpp"
#include "test_support.hpp"

namespace leaflet::text {
namespace {

using leaflet::testing::TempDir;

TEST(Tokenize, AlphanumericRunsOfTwoOrMore) {
    EXPECT_EQ(tokenize("250g + 40g"), (std::vector<std::string>{"250g", "40g"}));
    EXPECT_EQ(tokenize("x y z"), std::vector<std::string>{});
    EXPECT_EQ(tokenize("MILCH-Drink, 1,5l"), (std::vector<std::string>{"milch", "drink", "5l"}));
    EXPECT_EQ(tokenize("a_b"), std::vector<std::string>{});
}

TEST(Tokenize, NonAsciiLettersStayInTokens) {
    EXPECT_EQ(tokenize("KÄSE Öl"), (std::vector<std::string>{"käse", "öl"}));
    EXPECT_EQ(tokenize("ß"), std::vector<std::string>{});  // one code point
}

TEST(Vectorizer, IdfFormula) {
    const std::vector<std::string> docs{"aa bb", "aa cc"};
    const auto vocab = fit_vectorizer(docs);
    EXPECT_EQ(vocab.tokens, (std::vector<std::string>{"aa", "bb", "cc"}));
    EXPECT_EQ(vocab.document_count, 2u);
    // ln(3/3) + 1 and ln(3/2) + 1
    EXPECT_DOUBLE_EQ(vocab.idf[0], 1.0);
    EXPECT_NEAR(vocab.idf[1], 1.4054651081081644, 1e-15);
    EXPECT_EQ(vocab.index_of("cc"), 2);
    EXPECT_EQ(vocab.index_of("dd"), -1);
}

TEST(Vectorizer, IdfIsPositiveAndFinite) {
    std::vector<std::string> docs(50, "common");
    docs.push_back("rare common");
    const auto vocab = fit_vectorizer(docs);
    for (const double v : vocab.idf) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 1.0 - std::log(2.0));
    }
}

TEST(Vectorizer, EmptyVocabularyAndEmptyCorpus) {
    const std::vector<std::string> short_tokens{"x y z"};
    EXPECT_THROW(fit_vectorizer(short_tokens), Error);
    EXPECT_THROW(fit_vectorizer(std::vector<std::string>{}), PreconditionError);
}

TEST(Vectorize, HandComputedExample) {
    const std::vector<std::string> docs{"aa bb", "aa cc"};
    const auto vocab = fit_vectorizer(docs);
    const auto v = vectorize("aa aa bb", vocab);
    // (2 * 1.0, 1 * 1.4054651081) / 2.4444...
    ASSERT_EQ(v.indices, (std::vector<std::uint32_t>{0, 1}));
    EXPECT_NEAR(v.values[0], 0.8181802073667197, 1e-12);
    EXPECT_NEAR(v.values[1], 0.5749618667993135, 1e-12);
    EXPECT_NEAR(v.values[0] * v.values[0] + v.values[1] * v.values[1], 1.0, 1e-15);
}

TEST(Vectorize, SingleTokenAndEmptyDocument) {
    const auto vocab = fit_vectorizer(std::vector<std::string>{"aa bb", "aa cc"});
    const auto one = vectorize("zz cc zz", vocab);
    ASSERT_EQ(one.indices.size(), 1u);
    EXPECT_DOUBLE_EQ(one.values[0], 1.0);
    EXPECT_TRUE(vectorize("", vocab).empty());
    EXPECT_TRUE(vectorize("unknown words", vocab).empty());
}

TEST(ModifiedHuber, Branches) {
    EXPECT_EQ(modified_huber(1.5).loss, 0.0);
    EXPECT_EQ(modified_huber(1.5).gradient, 0.0);
    EXPECT_EQ(modified_huber(0.0).loss, 1.0);
    EXPECT_EQ(modified_huber(0.0).gradient, -2.0);
    EXPECT_EQ(modified_huber(-2.0).loss, 8.0);
    EXPECT_EQ(modified_huber(-2.0).gradient, -4.0);
    EXPECT_EQ(modified_huber(1.0).loss, 0.0);
    EXPECT_EQ(modified_huber(-1.0).loss, 4.0);
}

TEST(ModifiedHuber, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> z(-6.0, 6.0);
    const double h = 1e-5;
    for (int i = 0; i < 200; ++i) {
        const double m = z(rng);
        if (std::abs(m - 1.0) < 1e-3 || std::abs(m + 1.0) < 1e-3) continue;
        const double fd = (modified_huber(m + h).loss - modified_huber(m - h).loss) / (2 * h);
        EXPECT_NEAR(modified_huber(m).gradient, fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Probabilities, ClampAndNormalize) {
    const std::vector<double> a{1.0, -1.0};
    EXPECT_EQ(margins_to_probabilities(a), (std::vector<double>{1.0, 0.0}));
    const std::vector<double> b{-1.0, -1.0};
    EXPECT_EQ(margins_to_probabilities(b), (std::vector<double>{0.5, 0.5}));
    const std::vector<double> c{0.0, -0.5};
    const auto p = margins_to_probabilities(c);
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
    const std::vector<double> d{5.0, 3.0, -7.0};
    EXPECT_EQ(margins_to_probabilities(d), (std::vector<double>{0.5, 0.5, 0.0}));
}

struct Fitted {
    std::vector<SparseVector> x;
    std::vector<int> y;
    TfidfVocabulary vocab;
};

Fitted featurize(const std::vector<std::string>& docs, const std::vector<int>& labels) {
    Fitted f;
    f.vocab = fit_vectorizer(docs);
    for (const auto& d : docs) f.x.push_back(vectorize(d, f.vocab));
    f.y = labels;
    return f;
}

TEST(Train, SeparableSingletonsAreFitExactly) {
    auto f = featurize({"alpha bravo", "charlie delta"}, {0, 1});
    const auto model = train_text_model(f.x, f.y, {0, 1}, f.vocab);
    EXPECT_EQ(model.weights.size(), 2 * model.n_features());
    EXPECT_EQ(model.bias.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        const auto p = predict_text_scores(model, i == 0 ? "alpha bravo" : "charlie delta");
        EXPECT_GT(p[i], p[1 - i]);
    }
}

TEST(Train, DeterministicPerSeed) {
    auto f = featurize({"aa bb", "bb cc", "cc dd", "dd ee", "aa ee", "bb dd"}, {0, 1, 2, 0, 1, 2});
    SgdHyperparams hp;
    hp.max_epochs = 50;
    const auto a = train_text_model(f.x, f.y, {0, 1, 2}, f.vocab, hp);
    const auto b = train_text_model(f.x, f.y, {0, 1, 2}, f.vocab, hp);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.bias, b.bias);
    hp.seed = 43;
    const auto c = train_text_model(f.x, f.y, {0, 1, 2}, f.vocab, hp);
    EXPECT_NE(a.weights, c.weights);
}

TEST(Train, AdaptiveScheduleOnlyDividesAfterPatience) {
    auto f = featurize({"aa bb", "aa bb", "aa cc", "bb cc", "cc dd", "aa dd"}, {0, 1, 0, 1, 0, 1});
    SgdHyperparams hp;
    hp.max_epochs = 200;
    std::vector<ClassTrace> trace;
    train_text_model(f.x, f.y, {0, 1}, f.vocab, hp, &trace);
    ASSERT_EQ(trace.size(), 2u);
    for (const auto& t : trace) {
        ASSERT_FALSE(t.eta.empty());
        EXPECT_EQ(t.eta.front(), hp.eta0);
        int stale = 0;
        for (std::size_t e = 1; e < t.eta.size(); ++e) {
            const bool was_stale = t.epoch_loss[e - 1] > (e >= 2 ? t.best_loss[e - 2] : INFINITY) - hp.tolerance;
            stale = was_stale ? stale + 1 : 0;
            if (stale >= hp.patience) {
                EXPECT_DOUBLE_EQ(t.eta[e], t.eta[e - 1] / hp.eta_divisor);
                stale = 0;
            } else {
                EXPECT_EQ(t.eta[e], t.eta[e - 1]);
            }
            EXPECT_LE(t.best_loss[e], t.best_loss[e - 1]);
        }
        // The conflicting duplicate "aa bb" keeps the loss from vanishing, so eta decays to the floor.
        EXPECT_LT(t.eta.back(), hp.min_eta * hp.eta_divisor);
    }
}

TEST(Train, DomainErrors) {
    auto f = featurize({"aa bb", "cc dd"}, {0, 1});
    EXPECT_THROW(train_text_model(f.x, std::vector<int>{0, 5}, {0, 1}, f.vocab), PreconditionError);
    EXPECT_THROW(train_text_model(f.x, std::vector<int>{0}, {0, 1}, f.vocab), PreconditionError);
    EXPECT_THROW(train_text_model(f.x, std::vector<int>{1, 1}, {0, 1}, f.vocab), PreconditionError);
    EXPECT_THROW(train_text_model(f.x, f.y, {0, 0}, f.vocab), PreconditionError);
}

TEST(Model, RoundTripIsBitIdentical) {
    TempDir dir;
    auto f = featurize({"milch 250g", "milch 290g", "kaffee 500g", "tee 100g"}, {0, 1, 2, 2});
    const auto model = train_text_model(f.x, f.y, {0, 1, 2}, f.vocab);
    save_text_model(model, dir / "text.json");
    const auto back = load_text_model(dir / "text.json");
    EXPECT_EQ(back.weights, model.weights);
    EXPECT_EQ(back.bias, model.bias);
    EXPECT_EQ(back.vocabulary.tokens, model.vocabulary.tokens);
    EXPECT_EQ(back.vocabulary.idf, model.vocabulary.idf);
    EXPECT_EQ(back.hyperparams, model.hyperparams);
    for (const auto* doc : {"milch 250g", "kaffee tee", "unbekannt", "milch 290g 250g"})
        EXPECT_EQ(predict_text_scores(back, doc), predict_text_scores(model, doc));
}

TEST(Model, LoadRejectsWrongFormat) {
    TempDir dir;
    leaflet::testing::write_file(dir / "x.json", R"({"format":"something-else","version":1})");
    EXPECT_THROW(load_text_model(dir / "x.json"), Error);
}

}  // namespace
}  // namespace leaflet::text
