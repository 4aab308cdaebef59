#include "anam/archive.hpp"
#include "anam/errors.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>

using namespace anam;

TEST(HexDouble, Lossless) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rng.uniform(-1, 1), static_cast<int>(rng.uniform(-300, 300)));
        const double back = parse_hex_double(hex_double(v));
        EXPECT_EQ(std::memcmp(&v, &back, sizeof v), 0);
    }
    EXPECT_EQ(parse_hex_double(hex_double(-0.0)), 0.0);
    EXPECT_TRUE(std::signbit(parse_hex_double(hex_double(-0.0))));
    EXPECT_EQ(parse_hex_double(hex_double(1e-310)), 1e-310);
    EXPECT_THROW(parse_hex_double("0x1.8p+1junk"), DataError);
}

TEST(Archive, RoundTripIsExact) {
    auto gc = fixture::random_gradient_case(4);
    ModelArchive a;
    a.schema = gc.data.schema();
    a.model = gc.model;
    a.train_config.learning_rate = 3e-3;
    a.train_config.optimizer = OptimizerKind::rmsprop;
    a.fitted_dispersion = 0.123456789;
    PreprocessReport pr;
    pr.options.standardize = true;
    pr.stats = {{"a", 0.1, 2.0}};
    a.preprocess = pr;
    const auto text = serialize_archive(a);
    const auto back = parse_archive(text);
    EXPECT_EQ(serialize_archive(back), text);
    EXPECT_TRUE(back.model == a.model);
    EXPECT_EQ(back.train_config.learning_rate, 3e-3);
    EXPECT_EQ(back.train_config.optimizer, OptimizerKind::rmsprop);
    EXPECT_EQ(*back.fitted_dispersion, 0.123456789);
    ASSERT_TRUE(back.preprocess);
    EXPECT_EQ(back.preprocess->stats[0].sd, 2.0);
    const auto p0 = predict_batch(a.model, gc.data);
    const auto p1 = predict_batch(back.model, gc.data);
    for (std::size_t i = 0; i < p0.mu.size(); ++i) EXPECT_EQ(std::memcmp(&p0.mu[i], &p1.mu[i], sizeof(double)), 0);
}

TEST(Archive, RejectsNewerVersionAndGarbage) {
    auto gc = fixture::random_gradient_case(5);
    ModelArchive a;
    a.schema = gc.data.schema();
    a.model = gc.model;
    auto j = nlohmann::json::parse(serialize_archive(a));
    j["format_version"] = kArchiveVersion + 1;
    EXPECT_THROW(parse_archive(j.dump()), DataError);
    EXPECT_THROW(parse_archive("{not json"), DataError);
    EXPECT_THROW(load_archive("/nonexistent/model.json"), MissingFileError);
}

TEST(Archive, HistoryDigest) {
    TrainResult r;
    r.history = {{1, 2.0, 2.0, 1.5, 0, 0}, {2, 1.9, 1.9, 1.6, 0, 0}};
    r.best_epoch = 1;
    r.best_val_nll = 1.5;
    r.reason = StopReason::early_stopped;
    const auto d = history_digest(r);
    EXPECT_EQ(d.at("epochs").get<int>(), 2);
    EXPECT_EQ(d.at("best_epoch").get<int>(), 1);
    EXPECT_EQ(d.at("stop_reason").get<std::string>(), "early_stopped");
    r.history[1].val_nll = 1.7;
    EXPECT_NE(history_digest(r).at("history_fnv1a"), d.at("history_fnv1a"));
}
