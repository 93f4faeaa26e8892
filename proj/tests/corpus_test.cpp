#include <doctest.h>

#include <sstream>
#include <string>

#include <ismell/corpus.hpp>

#include "support/fixtures.hpp"

using namespace ismell;
using namespace ismell::corpus;

TEST_CASE("extract_code_blocks finds a simple fenced block") {
    const std::string content = "intro\n```py\nx = 1\n```\noutro";
    auto out = extract_code_blocks(content);
    REQUIRE(out.blocks.size() == 1);
    CHECK(out.warnings.empty());
    const CodeBlock& b = out.blocks[0];
    CHECK(b.language_hint == "py");
    CHECK(b.text == "x = 1");
    CHECK(content.substr(b.begin, b.end - b.begin) == "```py\nx = 1\n```");
}

TEST_CASE("extract_code_blocks handles no fences and bare fences") {
    CHECK(extract_code_blocks("no code here").blocks.empty());

    auto out = extract_code_blocks("```\ncode\n```");
    REQUIRE(out.blocks.size() == 1);
    CHECK_FALSE(out.blocks[0].language_hint.has_value());
    CHECK(out.blocks[0].text == "code");
}

TEST_CASE("extract_code_blocks takes only the first info tag token") {
    auto out = extract_code_blocks("```c++ title=demo\nint a;\n```");
    REQUIRE(out.blocks.size() == 1);
    CHECK(out.blocks[0].language_hint == "c++");
}

TEST_CASE("extract_code_blocks tolerates indented fences and long fences") {
    auto out = extract_code_blocks("  ````go\nf()\n  ````");
    REQUIRE(out.blocks.size() == 1);
    CHECK(out.blocks[0].language_hint == "go");
    CHECK(out.blocks[0].text == "f()");
}

TEST_CASE("extract_code_blocks finds multiple blocks in order") {
    const std::string content = "```a\n1\n```\ntext\n```b\n2\n```";
    auto out = extract_code_blocks(content);
    REQUIRE(out.blocks.size() == 2);
    CHECK(out.blocks[0].language_hint == "a");
    CHECK(out.blocks[1].language_hint == "b");
    CHECK(out.blocks[0].end <= out.blocks[1].begin);
}

TEST_CASE("extract_code_blocks keeps inner backtick runs with trailing text") {
    // A line with backticks followed by more text is not a closer.
    auto out = extract_code_blocks("```\n``` not a closer\nreal code\n```");
    REQUIRE(out.blocks.size() == 1);
    CHECK(out.blocks[0].text == "``` not a closer\nreal code");
}

TEST_CASE("extract_code_blocks reports unterminated fences and moves on") {
    auto out = extract_code_blocks("before\n```py\ndangling");
    CHECK(out.blocks.empty());
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("unterminated") != std::string::npos);

    // A dangling opener at the end warns without hiding earlier full blocks.
    auto mixed = extract_code_blocks("```\nok\n```\nafter\n```py\ndangling");
    REQUIRE(mixed.blocks.size() == 1);
    CHECK(mixed.blocks[0].text == "ok");
    REQUIRE(mixed.warnings.size() == 1);
    CHECK(mixed.warnings[0].find("unterminated") != std::string::npos);
}

TEST_CASE("extract_code_blocks preserves empty block bodies") {
    auto out = extract_code_blocks("```\n```");
    REQUIRE(out.blocks.size() == 1);
    CHECK(out.blocks[0].text.empty());
}

TEST_CASE("Turn::make derives code blocks from content") {
    Turn t = Turn::make(1, Role::assistant, "```rs\nfn main() {}\n```");
    REQUIRE(t.code_blocks.size() == 1);
    CHECK(t.code_blocks[0].language_hint == "rs");
    CHECK(t.index == 1);
    CHECK(t.role == Role::assistant);
}

TEST_CASE("validate_conversation accepts a well-formed conversation") {
    auto c = ismell::testing::make_conversation("c1", {"hi", "hello", "more", "done"});
    CHECK(validate_conversation(c).empty());
    CHECK(c.user_turn_count() == 2);
    CHECK(c.multi_turn());
}

TEST_CASE("validate_conversation flags structural violations") {
    auto c = ismell::testing::make_conversation("c1", {"hi", "hello"});

    SUBCASE("role order") {
        c.turns[0].role = Role::assistant;
        auto v = validate_conversation(c);
        REQUIRE_FALSE(v.empty());
        CHECK(v[0].find("role order") != std::string::npos);
    }
    SUBCASE("index gap") {
        c.turns[1].index = 5;
        auto v = validate_conversation(c);
        REQUIRE_FALSE(v.empty());
        CHECK(v[0].find("index") != std::string::npos);
    }
    SUBCASE("stale code blocks") {
        c.turns[1].content = "```\nnew\n```";  // blocks not re-derived
        auto v = validate_conversation(c);
        REQUIRE_FALSE(v.empty());
        CHECK(v[0].find("stale") != std::string::npos);
    }
    SUBCASE("empty id") {
        c.id.clear();
        auto v = validate_conversation(c);
        REQUIRE_FALSE(v.empty());
        CHECK(v[0].find("id") != std::string::npos);
    }
}

TEST_CASE("parse_conversation_line round-trips through serialize_conversation") {
    Conversation c = ismell::testing::make_conversation(
        "conv-7", {"write code\n```py\nx\n```", "```py\nx = 2\n```", "thanks", "done"});
    c.source = Source::wildchat_like;
    c.model_name = "some-model";
    c.language_tags = {"python"};

    std::string line = serialize_conversation(c);
    CHECK(line.find('\n') == std::string::npos);

    auto parsed = parse_conversation_line(line);
    REQUIRE(parsed.ok());
    CHECK(parsed.value() == c);
    CHECK(serialize_conversation(parsed.value()) == line);
}

TEST_CASE("parse_conversation_line rejection reasons") {
    auto reason = [](std::string_view line) {
        auto r = parse_conversation_line(line);
        REQUIRE_FALSE(r.ok());
        return r.error().message;
    };

    CHECK(reason("not json") == "json");
    CHECK(reason("[1,2]") == "json");
    CHECK(reason(R"({"turns":[{"role":"user","content":"x"}]})") == "id");
    CHECK(reason(R"({"id":"","turns":[{"role":"user","content":"x"}]})") == "id");
    CHECK(reason(R"({"id":"a","source":"mystery","turns":[{"role":"user","content":"x"}]})") ==
          "source");
    CHECK(reason(R"({"id":"a","model":7,"turns":[{"role":"user","content":"x"}]})") == "model");
    CHECK(reason(R"({"id":"a","language_tags":"py","turns":[{"role":"user","content":"x"}]})") ==
          "language_tags");
    CHECK(reason(R"({"id":"a"})") == "turns");
    CHECK(reason(R"({"id":"a","turns":[]})") == "turns");
    CHECK(reason(R"({"id":"a","turns":[{"role":"robot","content":"x"}]})") == "role");
    CHECK(reason(R"({"id":"a","turns":[{"role":"user"}]})") == "content");
    CHECK(reason(R"({"id":"a","turns":[{"role":"user","content":7}]})") == "content");
    CHECK(reason(R"({"id":"a","turns":[{"role":"assistant","content":"x"}]})") == "role order");
    CHECK(reason(R"({"id":"a","turns":[{"role":"user","content":"x"},)"
                 R"({"role":"user","content":"y"}]})") == "role order");
}

TEST_CASE("parse_conversation_line rejects oversized lines") {
    std::string line(kMaxRecordLineBytes + 1, 'x');
    auto r = parse_conversation_line(line);
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().message == "line too large");
}

TEST_CASE("parse_conversation_line defaults and tolerated extras") {
    auto r = parse_conversation_line(
        R"({"id":"a","turns":[{"role":"user","content":"x"}],"future_field":1})");
    REQUIRE(r.ok());
    CHECK(r.value().source == Source::synthetic);
    CHECK_FALSE(r.value().model_name.has_value());
    CHECK(r.value().turns[0].index == 1);
}

TEST_CASE("parse_corpus skips blanks, reports rejects and fence warnings") {
    std::istringstream in(
        "\n"
        R"({"id":"a","turns":[{"role":"user","content":"hi"}]})" "\n"
        "   \n"
        "broken\n"
        R"({"id":"b","turns":[{"role":"user","content":"```py\ndangling"}]})" "\r\n"
        R"({"id":"a","turns":[{"role":"user","content":"dup"}]})" "\n");
    ParseReport report = parse_corpus(in);

    CHECK(report.accepted == 2);
    CHECK(report.rejected == 2);
    REQUIRE(report.conversations.size() == 2);
    CHECK(report.conversations[0].id == "a");
    CHECK(report.conversations[1].id == "b");

    REQUIRE(report.rejections.size() == 2);
    CHECK(report.rejections[0].line_number == 4);
    CHECK(report.rejections[0].reason == "json");
    CHECK(report.rejections[1].line_number == 6);
    CHECK(report.rejections[1].reason == "duplicate id");
    CHECK(report.rejections[1].detail == "a");

    REQUIRE(report.warnings.size() == 1);
    CHECK(report.warnings[0].find("line 5 turn 1") != std::string::npos);
}

TEST_CASE("parse_corpus_file reads the bundled fixture") {
    auto r = parse_corpus_file(ismell::testing::test_data("corpus_small.jsonl"));
    REQUIRE(r.ok());
    const ParseReport& report = r.value();
    CHECK(report.accepted == 3);
    CHECK(report.rejected == 1);
    REQUIRE(report.conversations.size() == 3);
    CHECK(report.conversations[0].multi_turn());
}

TEST_CASE("parse_corpus_file reports a missing file") {
    auto r = parse_corpus_file(ismell::testing::test_data("does_not_exist.jsonl"));
    REQUIRE_FALSE(r.ok());
    CHECK(r.error().kind == Error::Kind::io);
}

TEST_CASE("write_corpus_file then parse gives back the same corpus") {
    auto dir = ismell::testing::scratch_dir("corpus_write");
    std::vector<Conversation> corpus = {
        ismell::testing::make_conversation("w1", {"a", "b"}),
        ismell::testing::make_conversation("w2", {"c", "d", "e", "f"}),
    };
    corpus[1].language_tags = {"go", "python"};

    auto err = write_corpus_file(corpus, dir / "out.jsonl");
    REQUIRE_FALSE(err.has_value());

    auto r = parse_corpus_file(dir / "out.jsonl");
    REQUIRE(r.ok());
    CHECK(r.value().conversations == corpus);
}

TEST_CASE("serialize_conversation key order is stable") {
    Conversation c = ismell::testing::make_conversation("k", {"u"});
    c.model_name = "m";
    c.language_tags = {"python"};
    std::string line = serialize_conversation(c);
    CHECK(line ==
          R"({"id":"k","source":"synthetic","model":"m",)"
          R"("turns":[{"role":"user","content":"u"}],"language_tags":["python"]})");
}
