#include <doctest.h>

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <ismell/ratio.hpp>
#include <ismell/taxonomy.hpp>

#include "support/fixtures.hpp"

using namespace ismell;
using namespace ismell::taxonomy;

TEST_CASE("taxonomy has nine smells in three categories") {
    const auto& smells = all_smells();
    REQUIRE(smells.size() == 9);

    // Array order matches the enum, and names round-trip.
    for (std::size_t i = 0; i < smells.size(); ++i) {
        CHECK(static_cast<std::size_t>(smells[i].smell) == i);
        auto back = smell_from_name(smells[i].id_name);
        REQUIRE(back.has_value());
        CHECK(*back == smells[i].smell);
        CHECK_FALSE(smells[i].definition.empty());
    }
    CHECK_FALSE(smell_from_name("no_such_smell").has_value());

    CHECK(category_of(Smell::ambiguous_instruction) == Category::user_intent_quality);
    CHECK(category_of(Smell::incomplete_instruction) == Category::user_intent_quality);
    CHECK(category_of(Smell::must_do_omission) ==
          Category::historical_instruction_compliance);
    CHECK(category_of(Smell::must_not_violation) ==
          Category::historical_instruction_compliance);
    CHECK(category_of(Smell::signature_mismatch) == Category::historical_response_violation);
    CHECK(category_of(Smell::cross_turn_inconsistency) ==
          Category::historical_response_violation);
    CHECK(category_of(Smell::partial_functionality_breakdown) ==
          Category::historical_response_violation);
    CHECK(category_of(Smell::code_rollback) == Category::historical_response_violation);
    CHECK(category_of(Smell::repetitive_response) == Category::historical_response_violation);
}

TEST_CASE("only the two user-intent smells are user-side") {
    for (const SmellInfo& si : all_smells()) {
        const bool user_side = attribution_of(si.smell) == Attribution::user_side;
        CHECK(user_side == (si.category == Category::user_intent_quality));
    }
}

TEST_CASE("detector names round-trip") {
    for (DetectorKind d : {DetectorKind::heuristic, DetectorKind::llm_judge, DetectorKind::human}) {
        auto back = detector_from_name(detector_name(d));
        REQUIRE(back.has_value());
        CHECK(*back == d);
    }
    CHECK_FALSE(detector_from_name("oracle").has_value());
}

TEST_CASE("validate_annotation checks id, range, attribution, confidence") {
    auto c = ismell::testing::make_conversation("conv", {"ask", "reply"});
    SmellAnnotation a;
    a.conversation_id = "conv";
    a.turn_index = 2;
    a.smell = Smell::repetitive_response;

    CHECK(validate_annotation(a, c).empty());

    SUBCASE("id mismatch") {
        a.conversation_id = "other";
        auto v = validate_annotation(a, c);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "conversation id mismatch");
    }
    SUBCASE("out of range") {
        a.turn_index = 3;
        auto v = validate_annotation(a, c);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "range");
    }
    SUBCASE("model-side smell on a user turn") {
        a.turn_index = 1;
        auto v = validate_annotation(a, c);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "attribution");
    }
    SUBCASE("user-side smell on an assistant turn") {
        a.smell = Smell::ambiguous_instruction;
        auto v = validate_annotation(a, c);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "attribution");
    }
    SUBCASE("user-side smell on a user turn is fine") {
        a.smell = Smell::ambiguous_instruction;
        a.turn_index = 1;
        CHECK(validate_annotation(a, c).empty());
    }
    SUBCASE("confidence out of bounds") {
        a.confidence = 1.5;
        auto v = validate_annotation(a, c);
        REQUIRE(v.size() == 1);
        CHECK(v[0] == "confidence");
    }
}

namespace {

SmellAnnotation ann(const std::string& id, int turn, Smell s) {
    SmellAnnotation a;
    a.conversation_id = id;
    a.turn_index = turn;
    a.smell = s;
    return a;
}

}  // namespace

TEST_CASE("smell_distribution counts sessions once per smell") {
    std::vector<SmellAnnotation> annotations = {
        ann("s1", 2, Smell::repetitive_response),
        ann("s1", 4, Smell::repetitive_response),  // same session, same smell
        ann("s1", 4, Smell::code_rollback),
        ann("s2", 2, Smell::repetitive_response),
    };
    DistributionTable table = smell_distribution(annotations, 10);
    CHECK(table.session_counts[static_cast<std::size_t>(Smell::repetitive_response)] == 2);
    CHECK(table.session_counts[static_cast<std::size_t>(Smell::code_rollback)] == 1);
    CHECK(table.session_counts[static_cast<std::size_t>(Smell::must_do_omission)] == 0);
    CHECK(table.prevalence(Smell::repetitive_response) == Ratio{200, 10});
    CHECK(format_2dp(table.prevalence(Smell::repetitive_response)) == "20.00");
}

TEST_CASE("smell_distribution prevalence renders with half-up rounding") {
    std::vector<SmellAnnotation> annotations;
    for (int i = 0; i < 145; ++i) {
        annotations.push_back(ann("s" + std::to_string(i), 2, Smell::must_do_omission));
    }
    DistributionTable table = smell_distribution(annotations, 378);
    CHECK(format_2dp(table.prevalence(Smell::must_do_omission)) == "38.36");
}

TEST_CASE("smell_distribution rejects a non-positive denominator") {
    std::vector<SmellAnnotation> none;
    CHECK_THROWS_AS(smell_distribution(none, 0), std::invalid_argument);
}

TEST_CASE("smell_distribution filters unknown conversations with one warning each") {
    std::vector<SmellAnnotation> annotations = {
        ann("known", 2, Smell::code_rollback),
        ann("ghost", 2, Smell::code_rollback),
        ann("ghost", 4, Smell::repetitive_response),
    };
    std::set<std::string> known = {"known"};
    std::vector<std::string> warnings;
    DistributionTable table = smell_distribution(annotations, 5, &known, &warnings);
    CHECK(table.session_counts[static_cast<std::size_t>(Smell::code_rollback)] == 1);
    CHECK(table.session_counts[static_cast<std::size_t>(Smell::repetitive_response)] == 0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("ghost") != std::string::npos);
}

TEST_CASE("annotations round-trip through the line format") {
    SmellAnnotation a = ann("conv-9", 4, Smell::code_rollback);
    a.evidence = "def f(): pass";
    a.evidence_span = {{10, 25}};
    a.rationale = "matches turn 2 block";
    a.detector = DetectorKind::heuristic;
    a.confidence = 1.0;

    std::string line = serialize_annotation(a);
    auto parsed = parse_annotation_line(line);
    REQUIRE(parsed.ok());
    CHECK(parsed.value() == a);
    CHECK(serialize_annotation(parsed.value()) == line);
}

TEST_CASE("parse_annotation_line fills confidence defaults by detector") {
    auto judged = parse_annotation_line(
        R"({"conversation_id":"c","turn_index":2,"smell":"repetitive_response",)"
        R"("detector":"llm_judge"})");
    REQUIRE(judged.ok());
    CHECK(judged.value().confidence == doctest::Approx(0.5));

    auto heuristic = parse_annotation_line(
        R"({"conversation_id":"c","turn_index":2,"smell":"repetitive_response",)"
        R"("detector":"heuristic"})");
    REQUIRE(heuristic.ok());
    CHECK(heuristic.value().confidence == doctest::Approx(1.0));
}

TEST_CASE("parse_annotation_line rejects malformed records") {
    auto reason = [](std::string_view line) {
        auto r = parse_annotation_line(line);
        REQUIRE_FALSE(r.ok());
        return r.error().message;
    };
    CHECK(reason(R"({"turn_index":2,"smell":"code_rollback","detector":"heuristic"})") ==
          "conversation_id");
    CHECK(reason(R"({"conversation_id":"c","turn_index":0,"smell":"code_rollback",)"
                 R"("detector":"heuristic"})") == "turn_index");
    CHECK(reason(R"({"conversation_id":"c","turn_index":1,"smell":"nope",)"
                 R"("detector":"heuristic"})") == "smell");
    CHECK(reason(R"({"conversation_id":"c","turn_index":1,"smell":"code_rollback",)"
                 R"("detector":"vibes"})") == "detector");
    CHECK(reason(R"({"conversation_id":"c","turn_index":1,"smell":"code_rollback",)"
                 R"("detector":"heuristic","confidence":2})") == "confidence");
    CHECK(reason(R"({"conversation_id":"c","turn_index":1,"smell":"code_rollback",)"
                 R"("detector":"heuristic","evidence_span":[5]})") == "evidence_span");
}

TEST_CASE("write_annotations then load_annotations round-trips") {
    auto dir = ismell::testing::scratch_dir("taxonomy_io");
    std::vector<SmellAnnotation> annotations = {
        ann("a", 2, Smell::repetitive_response),
        ann("b", 4, Smell::must_do_omission),
    };
    annotations[0].detector = DetectorKind::llm_judge;
    annotations[0].confidence = 0.75;

    auto err = write_annotations(annotations, dir / "ann.jsonl");
    REQUIRE_FALSE(err.has_value());
    auto loaded = load_annotations(dir / "ann.jsonl");
    REQUIRE(loaded.ok());
    CHECK(loaded.value() == annotations);
}

TEST_CASE("load_annotations reports the failing line") {
    auto dir = ismell::testing::scratch_dir("taxonomy_bad");
    ismell::testing::write_file(
        dir / "bad.jsonl",
        R"({"conversation_id":"a","turn_index":2,"smell":"code_rollback","detector":"heuristic"})"
        "\nnot json\n");
    auto loaded = load_annotations(dir / "bad.jsonl");
    REQUIRE_FALSE(loaded.ok());
    CHECK(loaded.error().message.find(":2:") != std::string::npos);
}
