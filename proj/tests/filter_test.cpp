#include <doctest.h>

#include <string>
#include <vector>

#include <ismell/filter.hpp>

#include "support/fixtures.hpp"
#include "support/scripted_backend.hpp"

using namespace ismell;
using namespace ismell::filter;
using ismell::testing::make_conversation;
using ismell::testing::ScriptedBackend;

TEST_CASE("default rules are valid and cover twenty languages") {
    const LanguageRuleSet& rules = default_rules();
    CHECK(rules.entries.size() == 20);
    CHECK(validate_rules(rules).empty());
}

TEST_CASE("shipped rules file matches the embedded defaults byte for byte") {
    std::string shipped = ismell::testing::read_file(
        std::filesystem::path(PROJECT_DATA_DIR) / "tiobe20_rules.jsonl");
    CHECK(shipped == serialize_rules(default_rules()));
}

TEST_CASE("rules round-trip through serialize and load") {
    auto dir = ismell::testing::scratch_dir("filter_rules");
    ismell::testing::write_file(dir / "rules.jsonl", serialize_rules(default_rules()));
    auto loaded = load_rules(dir / "rules.jsonl");
    REQUIRE(loaded.ok());
    REQUIRE(loaded.value().entries.size() == 20);
    CHECK(serialize_rules(loaded.value()) == serialize_rules(default_rules()));
}

TEST_CASE("load_rules rejects unknown keys and invalid sets") {
    auto dir = ismell::testing::scratch_dir("filter_rules_bad");

    SUBCASE("unknown key") {
        ismell::testing::write_file(
            dir / "r.jsonl",
            R"({"language":"X","full_names":["x"],"abbreviations":[],"extensions":[],)"
            R"("collision_risk":false,"regex":"x.*"})" "\n");
        auto r = load_rules(dir / "r.jsonl");
        REQUIRE_FALSE(r.ok());
        CHECK(r.error().message.find("regex") != std::string::npos);
    }
    SUBCASE("mistyped value") {
        ismell::testing::write_file(dir / "r.jsonl",
                                    R"({"language":"X","full_names":"x"})" "\n");
        CHECK_FALSE(load_rules(dir / "r.jsonl").ok());
    }
    SUBCASE("duplicate language") {
        ismell::testing::write_file(
            dir / "r.jsonl",
            R"({"language":"X","full_names":["x"],"abbreviations":[],"extensions":[],)"
            R"("collision_risk":false})" "\n"
            R"({"language":"X","full_names":["y"],"abbreviations":[],"extensions":[],)"
            R"("collision_risk":false})" "\n");
        auto r = load_rules(dir / "r.jsonl");
        REQUIRE_FALSE(r.ok());
        CHECK(r.error().kind == Error::Kind::validation);
    }
    SUBCASE("bad extension") {
        ismell::testing::write_file(
            dir / "r.jsonl",
            R"({"language":"X","full_names":["x"],"abbreviations":[],"extensions":["py"],)"
            R"("collision_risk":false})" "\n");
        CHECK_FALSE(load_rules(dir / "r.jsonl").ok());
    }
}

TEST_CASE("match_coding finds word-bounded language names case-insensitively") {
    auto c = make_conversation("m1", {"Help me write PYTHON code", "sure"});
    FilterVerdict v = match_coding(c, default_rules());
    CHECK(v.matched);
    CHECK(v.matched_languages.count("Python") == 1);
    REQUIRE_FALSE(v.evidence.empty());
    CHECK(v.evidence[0].rule == "full_name:python");
    CHECK(v.evidence[0].turn_index == 1);
}

TEST_CASE("match_coding does not match names inside larger words") {
    // "javascript" must not count as Java, and "scala" is not in the set.
    auto c = make_conversation("m2", {"I love javascript", "ok"});
    FilterVerdict v = match_coding(c, default_rules());
    CHECK(v.matched_languages.count("Java") == 0);
    CHECK(v.matched_languages.count("JavaScript") == 1);
}

TEST_CASE("match_coding handles punctuation-edged names") {
    auto c = make_conversation("m3", {"is c++11 still relevant?", "yes"});
    FilterVerdict v = match_coding(c, default_rules());
    CHECK(v.matched_languages.count("C++") == 1);
}

TEST_CASE("collision-risk names need corroboration") {
    SUBCASE("everyday use of 'go' does not match") {
        auto c = make_conversation("g1", {"I go home now", "have a nice trip"});
        FilterVerdict v = match_coding(c, default_rules());
        CHECK_FALSE(v.matched);
    }
    SUBCASE("'go' with any code fence matches") {
        auto c = make_conversation("g2", {"why does go panic here?",
                                          "```\npanic(\"x\")\n```"});
        FilterVerdict v = match_coding(c, default_rules());
        CHECK(v.matched_languages.count("Go") == 1);
    }
    SUBCASE("'go' with its own extension matches") {
        auto c = make_conversation("g3", {"main.go won't compile, go build fails", "check the package line"});
        FilterVerdict v = match_coding(c, default_rules());
        CHECK(v.matched_languages.count("Go") == 1);
        bool saw_extension = false;
        for (const MatchEvidence& e : v.evidence) {
            if (e.rule == "extension:.go") saw_extension = true;
        }
        CHECK(saw_extension);
    }
    SUBCASE("extensions count even without corroboration") {
        auto c = make_conversation("g4", {"what is inside script.r usually", "statistics"});
        FilterVerdict v = match_coding(c, default_rules());
        CHECK(v.matched_languages.count("R") == 1);
    }
    SUBCASE("fence hints count as hard evidence") {
        auto c = make_conversation("g5", {"review this", "```swift\nlet x = 1\n```"});
        FilterVerdict v = match_coding(c, default_rules());
        CHECK(v.matched_languages.count("Swift") == 1);
    }
    SUBCASE("a fence corroborates only name hits, not absent ones") {
        auto c = make_conversation("g6", {"write a poem", "```\nroses are red\n```"});
        FilterVerdict v = match_coding(c, default_rules());
        CHECK_FALSE(v.matched);
    }
}

TEST_CASE("match_coding evidence is sorted by turn then offset") {
    auto c = make_conversation("s1", {"python or java?", "java beats python here"});
    FilterVerdict v = match_coding(c, default_rules());
    REQUIRE(v.evidence.size() >= 3);
    for (std::size_t i = 1; i < v.evidence.size(); ++i) {
        const auto& a = v.evidence[i - 1];
        const auto& b = v.evidence[i];
        CHECK(std::tie(a.turn_index, a.begin) <= std::tie(b.turn_index, b.begin));
    }
}

TEST_CASE("removing a rule never adds matches") {
    auto c = make_conversation("mono", {"rust and python and sql", "```python\nx\n```"});
    FilterVerdict full = match_coding(c, default_rules());

    LanguageRuleSet subset;
    for (const LanguageRule& r : default_rules().entries) {
        if (r.language != "Rust") subset.entries.push_back(r);
    }
    FilterVerdict fewer = match_coding(c, subset);
    CHECK(fewer.evidence.size() <= full.evidence.size());
    for (const std::string& lang : fewer.matched_languages) {
        CHECK(full.matched_languages.count(lang) == 1);
    }
    CHECK(fewer.matched_languages.count("Rust") == 0);
}

namespace {

// Conversation with two interleaved topics: turns 1-2 and 5-6 are one topic,
// 3-4 the other.
corpus::Conversation interleaved() {
    return make_conversation("mix-1", {
        "How do I reverse a list in python?",
        "Use xs[::-1].",
        "Also, write a limerick about ducks.",
        "There once was a duck...",
        "Back to the list: sort it descending too.",
        "sorted(xs, reverse=True).",
    });
}

std::string assignment_reply(const std::vector<std::pair<int, std::string>>& pairs) {
    std::string out = R"({"assignments":[)";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (i > 0) out += ",";
        out += R"({"turn":)" + std::to_string(pairs[i].first) + R"(,"topic":")" +
               pairs[i].second + R"("})";
    }
    out += "]}";
    return out;
}

}  // namespace

TEST_CASE("disentangle splits a two-topic conversation into verbatim parts") {
    ScriptedBackend be([](const backend::ChatRequest&) {
        return ismell::testing::ok_response(assignment_reply(
            {{1, "code"}, {2, "code"}, {3, "poem"}, {4, "poem"}, {5, "code"}, {6, "code"}}));
    });

    corpus::Conversation c = interleaved();
    auto r = disentangle(c, be);
    REQUIRE(r.ok());
    const DisentangleOutcome& out = r.value();
    CHECK(out.split_applied);
    CHECK(out.warnings.empty());
    REQUIRE(out.parts.size() == 2);

    CHECK(out.parts[0].id == "mix-1#1");
    CHECK(out.parts[1].id == "mix-1#2");
    REQUIRE(out.parts[0].turns.size() == 4);
    REQUIRE(out.parts[1].turns.size() == 2);
    CHECK(out.parts[0].turns[0].content == c.turns[0].content);
    CHECK(out.parts[0].turns[2].content == c.turns[4].content);
    CHECK(out.parts[1].turns[0].content == c.turns[2].content);
    // Parts are re-indexed and structurally valid.
    CHECK(corpus::validate_conversation(out.parts[0]).empty());
    CHECK(corpus::validate_conversation(out.parts[1]).empty());

    // The request uses the dedicated role and pinned temperature.
    REQUIRE(be.call_count() == 1);
    CHECK(be.requests()[0].model_id == "disentangler");
    CHECK(be.requests()[0].temperature == kDisentangleTemperature);
    CHECK(be.requests()[0].messages[1].content.find("Turn 3 (user)") != std::string::npos);
}

TEST_CASE("disentangle keeps single-topic and single-user-turn conversations unsplit") {
    ScriptedBackend be([](const backend::ChatRequest&) {
        return ismell::testing::ok_response(assignment_reply(
            {{1, "A"}, {2, "A"}, {3, "A"}, {4, "A"}, {5, "A"}, {6, "A"}}));
    });

    auto single_topic = disentangle(interleaved(), be);
    REQUIRE(single_topic.ok());
    CHECK_FALSE(single_topic.value().split_applied);
    CHECK(single_topic.value().parts.size() == 1);

    auto short_conv = make_conversation("one", {"hi", "hello"});
    auto unsplit = disentangle(short_conv, be);
    REQUIRE(unsplit.ok());
    CHECK(unsplit.value().parts.size() == 1);
    CHECK(be.call_count() == 1);  // the short conversation never hit the backend
}

TEST_CASE("disentangle falls back to unsplit on invalid assignments") {
    auto expect_unsplit = [](const std::string& reply) {
        ScriptedBackend be([&reply](const backend::ChatRequest&) {
            return ismell::testing::ok_response(reply);
        });
        auto r = disentangle(interleaved(), be);
        REQUIRE(r.ok());
        CHECK_FALSE(r.value().split_applied);
        CHECK(r.value().parts.size() == 1);
        REQUIRE(r.value().warnings.size() == 1);
        CHECK(r.value().warnings[0].find("mix-1") != std::string::npos);
    };

    // Missing turn 6.
    expect_unsplit(assignment_reply({{1, "A"}, {2, "A"}, {3, "B"}, {4, "B"}, {5, "A"}}));
    // Duplicate turn.
    expect_unsplit(assignment_reply(
        {{1, "A"}, {1, "B"}, {2, "A"}, {3, "B"}, {4, "B"}, {5, "A"}, {6, "A"}}));
    // Out-of-range turn.
    expect_unsplit(assignment_reply(
        {{1, "A"}, {2, "A"}, {3, "B"}, {4, "B"}, {5, "A"}, {7, "A"}}));
    // Partition whose parts do not alternate user-first.
    expect_unsplit(assignment_reply(
        {{1, "A"}, {2, "B"}, {3, "B"}, {4, "A"}, {5, "A"}, {6, "B"}}));
}

TEST_CASE("disentangle reports backend failure with the conversation id") {
    ScriptedBackend be([](const backend::ChatRequest&) {
        return ismell::testing::backend_failure("offline");
    });
    auto r = disentangle(interleaved(), be);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().kind == Error::Kind::backend);
    CHECK(r.error().message.find("mix-1") != std::string::npos);
}

TEST_CASE("disentangle treats persistent junk replies as an error") {
    ScriptedBackend be([](const backend::ChatRequest&) {
        return ismell::testing::ok_response("I cannot answer in JSON, sorry.");
    });
    auto r = disentangle(interleaved(), be);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().kind == Error::Kind::structured_output);
    CHECK(be.call_count() == backend::kStructuredAttemptCap);
}

TEST_CASE("filter_corpus pre stage keeps only rule matches and counts turns") {
    std::vector<corpus::Conversation> corpus = {
        make_conversation("keep-multi", {"python help", "sure", "more python", "ok"}),
        make_conversation("keep-single", {"fix my sql query", "done"}),
        make_conversation("drop", {"what is the capital of France?", "Paris"}),
    };
    FilterResult r = filter_corpus(corpus, default_rules(), nullptr, Stage::pre);
    CHECK(r.stats.total == 3);
    CHECK(r.stats.kept == 2);
    CHECK(r.stats.single_turn == 1);
    CHECK(r.stats.multi_turn == 1);
    CHECK(r.stats.disentangled_outputs == 0);
    REQUIRE(r.kept.size() == 2);
    CHECK(r.kept[0].id == "keep-multi");
}

TEST_CASE("filter_corpus post stage disentangles then re-filters each part") {
    ScriptedBackend be([](const backend::ChatRequest&) {
        return ismell::testing::ok_response(assignment_reply(
            {{1, "code"}, {2, "code"}, {3, "poem"}, {4, "poem"}, {5, "code"}, {6, "code"}}));
    });
    std::vector<corpus::Conversation> corpus = {interleaved()};
    FilterResult r = filter_corpus(corpus, default_rules(), &be, Stage::post);

    // The poem part fails the rule match; only the coding part survives.
    CHECK(r.stats.total == 1);
    CHECK(r.stats.kept == 1);
    CHECK(r.stats.disentangled_outputs == 2);
    REQUIRE(r.kept.size() == 1);
    CHECK(r.kept[0].id == "mix-1#1");
}

TEST_CASE("filter_corpus post stage without a backend warns and keeps unsplit") {
    std::vector<corpus::Conversation> corpus = {interleaved()};
    FilterResult r = filter_corpus(corpus, default_rules(), nullptr, Stage::post);
    CHECK(r.stats.kept == 1);
    REQUIRE_FALSE(r.stats.warnings.empty());
    CHECK(r.stats.warnings[0].find("no backend") != std::string::npos);
}

TEST_CASE("filter_corpus post stage survives per-conversation backend failures") {
    ScriptedBackend be([](const backend::ChatRequest&) {
        return ismell::testing::backend_failure("offline");
    });
    std::vector<corpus::Conversation> corpus = {interleaved()};
    FilterResult r = filter_corpus(corpus, default_rules(), &be, Stage::post);
    CHECK(r.stats.kept == 1);  // unsplit conversation still matches the rules
    REQUIRE_FALSE(r.stats.warnings.empty());
    CHECK(r.stats.warnings[0].find("kept unsplit") != std::string::npos);
}

TEST_CASE("count_report_to_json carries every counter") {
    CountReport stats;
    stats.total = 5;
    stats.kept = 3;
    stats.single_turn = 1;
    stats.multi_turn = 2;
    stats.disentangled_outputs = 2;
    stats.warnings = {"w1"};
    backend::Json j = count_report_to_json(stats);
    CHECK(j["total"] == 5);
    CHECK(j["kept"] == 3);
    CHECK(j["single_turn"] == 1);
    CHECK(j["multi_turn"] == 2);
    CHECK(j["disentangled_outputs"] == 2);
    CHECK(j["warnings"][0] == "w1");
}
