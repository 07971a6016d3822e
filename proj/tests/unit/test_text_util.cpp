// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <medloop/errors.hpp>
#include <medloop/text_util.hpp>

#include <catch_amalgamated.hpp>

#include <random>

using namespace medloop;

namespace
{
auto valid_utf8(std::string_view s) -> bool
{
    std::size_t i = 0;
    while (i < s.size())
    {
        auto c = static_cast<unsigned char>(s[i]);
        std::size_t n = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
        if (n == 0 || i + n > s.size())
            return false;
        for (std::size_t k = 1; k < n; ++k)
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80)
                return false;
        i += n;
    }
    return true;
}
} // namespace

TEST_CASE("head and tail truncation", "[text]")
{
    CHECK(text::truncate_head("abcdef", 3) == "abc");
    CHECK(text::truncate_tail("abcdef", 3) == "def");
    CHECK(text::truncate_head("abc", 10) == "abc");
    CHECK(text::truncate_tail("abc", 0).empty());
    // "é" is two bytes
    CHECK(text::truncate_head("aé", 2) == "a");
    CHECK(text::truncate_tail("éa", 2) == "a");
}

TEST_CASE("truncation never splits a code point", "[text][property]")
{
    const std::string pieces[] = { "a", "é", "€", "𝛼", " ", "\n" };
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> pick(0, 5), len(0, 40), bound(0, 60);
    for (int i = 0; i < 2000; ++i)
    {
        std::string s;
        for (int k = len(rng); k > 0; --k)
            s += pieces[pick(rng)];
        auto b = static_cast<std::size_t>(bound(rng));
        auto h = text::truncate_head(s, b);
        auto t = text::truncate_tail(s, b);
        CHECK(h.size() <= b);
        CHECK(t.size() <= b);
        CHECK(h.size() + 3 >= std::min(b, s.size()));
        CHECK(t.size() + 3 >= std::min(b, s.size()));
        CHECK(s.rfind(h, 0) == 0);
        CHECK(s.compare(s.size() - t.size(), t.size(), t) == 0);
        CHECK(valid_utf8(h));
        CHECK(valid_utf8(t));
    }
}

TEST_CASE("key normalization and case helpers", "[text]")
{
    CHECK(text::normalize_key("Macro-F1") == "macrof1");
    CHECK(text::normalize_key("macro_f1") == "macrof1");
    CHECK(text::normalize_key(" C-Index ") == "cindex");
    CHECK(text::iequals("FINISH", "finish"));
    CHECK(text::starts_with_ci("Evaluation Metric: x", "evaluation metric"));
    CHECK(text::trim("  x \n") == "x");
    CHECK(text::count_occurrences("aaaa", "aa") == 2);
    CHECK(text::count_occurrences("abc", "") == 0);
}

TEST_CASE("render substitutes known placeholders only", "[text]")
{
    CHECK(text::render("{a} and {b}", { { "a", "1" } }) == "1 and {b}");
    CHECK(text::render("json {\"k\": 1} {a}", { { "a", "x" } }) == "json {\"k\": 1} x");
    // values are not rescanned
    CHECK(text::render("{a}", { { "a", "{b}" }, { "b", "no" } }) == "{b}");
    CHECK(text::render("{", {}) == "{");
}

TEST_CASE("or_none", "[text]")
{
    CHECK(text::or_none("") == "None");
    CHECK(text::or_none(" \n") == "None");
    CHECK(text::or_none("x") == "x");
    CHECK(text::or_none("", "unknown") == "unknown");
}

TEST_CASE("file helpers", "[text]")
{
    testutil::TempDir dir("text");
    auto p = dir / "a/b/c.txt";
    text::write_file(p, "one");
    text::append_file(p, "two");
    CHECK(text::read_file(p) == "onetwo");
    CHECK(text::read_file_if_exists(dir / "none").empty());
    CHECK_THROWS_AS(text::read_file(dir / "none"), FilesystemError);
}
