#include "deirank/bundle.hpp"
#include "deirank/diffkit.hpp"
#include "deirank/error.hpp"

#include "diff_oracle.hpp"

#include <doctest.h>

using namespace deirank;
using namespace deirank::diff;

namespace {

std::string const sample_file = "def f(x):\n    y = x\n    return y\n\n\ndef g():\n    pass\n";

std::string const sample_patch = R"(diff --git a/pkg/mod.py b/pkg/mod.py
index 1111111..2222222 100644
--- a/pkg/mod.py
+++ b/pkg/mod.py
@@ -1,3 +1,3 @@
 def f(x):
-    y = x
+    y = x + 1
     return y
@@ -6,2 +6,3 @@
 def g():
+    """docstring"""
     pass
)";

FileBundle sample_bundle()
{
    FileBundle b;
    b.add("inst", "pkg/mod.py", sample_file);
    return b;
}

} // namespace

TEST_CASE("parse a two-hunk git diff")
{
    auto patches = parse_unified_diff(sample_patch);
    REQUIRE(patches.size() == 1);
    auto const & fp = patches[0];
    CHECK(fp.old_path == "pkg/mod.py");
    CHECK(fp.new_path == "pkg/mod.py");
    REQUIRE(fp.hunks.size() == 2);
    CHECK(fp.hunks[0].old_start == 1);
    CHECK(fp.hunks[0].old_len == 3);
    CHECK(fp.hunks[1].new_len == 3);
    CHECK(fp.hunks[0].lines[1] == HunkLine{LineTag::remove, "    y = x", false});
    CHECK(touched_files(patches) == std::vector<std::string>{"pkg/mod.py"});
}

TEST_CASE("apply and reverse a known patch")
{
    auto bundle = sample_bundle();
    auto patches = parse_unified_diff(sample_patch);
    auto out = apply_patch(bundle, "inst", patches);
    CHECK(out.at("pkg/mod.py") == "def f(x):\n    y = x + 1\n    return y\n\n\ndef g():\n    \"\"\"docstring\"\"\"\n    pass\n");

    FileBundle patched;
    patched.add("inst", "pkg/mod.py", out.at("pkg/mod.py"));
    auto back = apply_patch(patched, "inst", reverse_patches(patches));
    CHECK(back.at("pkg/mod.py") == sample_file);
}

TEST_CASE("omitted hunk lengths default to one")
{
    auto patches = parse_unified_diff("--- a/x\n+++ b/x\n@@ -2 +2 @@\n-b\n+B\n");
    REQUIRE(patches[0].hunks.size() == 1);
    CHECK(patches[0].hunks[0].old_len == 1);
    FileBundle b;
    b.add("i", "x", "a\nb\nc\n");
    CHECK(apply_patch(b, "i", patches).at("x") == "a\nB\nc\n");
}

TEST_CASE("blank in-hunk line counts as empty context")
{
    // Some tools strip the leading space of empty context lines.
    auto patches = parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n a\n\n-c\n+C\n");
    FileBundle b;
    b.add("i", "x", "a\n\nc\n");
    CHECK(apply_patch(b, "i", patches).at("x") == "a\n\nC\n");
}

TEST_CASE("malformed diffs are rejected with the hunk named")
{
    SUBCASE("body shorter than header")
    {
        CHECK_THROWS_AS(parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,3 +1,3 @@\n a\n"), MalformedDiffError);
    }
    SUBCASE("body disagrees with header")
    {
        CHECK_THROWS_AS(parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n a\n-b\n c\n"), MalformedDiffError);
    }
    SUBCASE("garbled range")
    {
        CHECK_THROWS_AS(parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,x +1 @@\n a\n"), MalformedDiffError);
    }
    SUBCASE("overlapping hunks")
    {
        CHECK_THROWS_AS(
            parse_unified_diff("--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n a\n-b\n+B\n@@ -2,1 +2,1 @@\n-b\n+B\n"),
            MalformedDiffError);
    }
    SUBCASE("hunk before any file header")
    {
        try {
            parse_unified_diff("@@ -1 +1 @@\n-a\n+b\n");
            FAIL("expected MalformedDiffError");
        } catch (MalformedDiffError const & e) {
            CHECK(e.hunk_index() == 0);
        }
    }
}

TEST_CASE("conflicts report file, hunk and line")
{
    FileBundle b;
    b.add("i", "x", "a\nb\nc\n");
    auto patches = parse_unified_diff("--- a/x\n+++ b/x\n@@ -2,1 +2,1 @@\n-q\n+Q\n");
    try {
        apply_patch(b, "i", patches);
        FAIL("expected ApplyConflictError");
    } catch (ApplyConflictError const & e) {
        CHECK(e.file() == "x");
        CHECK(e.hunk_index() == 0);
        CHECK(e.line() == 2);
    }
    auto missing = parse_unified_diff("--- a/y\n+++ b/y\n@@ -1 +1 @@\n-a\n+b\n");
    CHECK_THROWS_AS(apply_patch(b, "i", missing), ApplyConflictError);
}

TEST_CASE("no-newline markers survive apply and serialize")
{
    std::string text = "--- a/x\n+++ b/x\n@@ -1,2 +1,2 @@\n a\n-b\n\\ No newline at end of file\n+B\n\\ No newline at end of file\n";
    auto patches = parse_unified_diff(text);
    FileBundle bundle;
    bundle.add("i", "x", "a\nb");
    CHECK(apply_patch(bundle, "i", patches).at("x") == "a\nB");
    CHECK(parse_unified_diff(serialize_unified_diff(patches)) == patches);
}

TEST_CASE("new, deleted and renamed files")
{
    FileBundle b;
    b.add("i", "old.txt", "one\ntwo\n");
    auto patches = parse_unified_diff(
        "--- /dev/null\n+++ b/new.txt\n@@ -0,0 +1,2 @@\n+hello\n+world\n"
        "--- a/old.txt\n+++ /dev/null\n@@ -1,2 +0,0 @@\n-one\n-two\n");
    REQUIRE(patches.size() == 2);
    CHECK(patches[0].is_new_file());
    CHECK(patches[1].is_deleted_file());
    auto out = apply_patch(b, "i", patches);
    CHECK(out.at("new.txt") == "hello\nworld\n");
    CHECK(out.count("old.txt") == 0);
    CHECK(touched_files(patches) == std::vector<std::string>{"old.txt"});

    auto views = render_before_after(b, "i", patches, 10);
    REQUIRE(views.size() == 2);
    CHECK(views[0].before == "(new file)\n");
    CHECK(views[0].after == "(new file)\n1 | hello\n2 | world\n");
    CHECK(views[1].before == "(file deleted)\n1 | one\n2 | two\n");
}

TEST_CASE("signature trailer ends the diff")
{
    auto patches = parse_unified_diff("From abc\nSubject: x\n\n--- a/x\n+++ b/x\n@@ -1 +1 @@\n-a\n+b\n-- \n2.40.0\n");
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].hunks.size() == 1);
}

TEST_CASE("before/after views number lines and elide far regions")
{
    std::vector<std::string> lines;
    for (int i = 1; i <= 60; ++i) {
        lines.push_back(fmt::format("line {}", i));
    }
    std::string content;
    for (auto const & l : lines) {
        content += l + "\n";
    }
    FileBundle b;
    b.add("i", "f", content);
    auto patches = parse_unified_diff(
        "--- a/f\n+++ b/f\n@@ -5,1 +5,1 @@\n-line 5\n+LINE 5\n@@ -50,1 +50,2 @@\n-line 50\n+LINE 50\n+extra\n");
    auto views = render_before_after(b, "i", patches, 2);
    REQUIRE(views.size() == 1);
    CHECK(views[0].before == " 3 | line 3\n 4 | line 4\n 5 | line 5\n 6 | line 6\n 7 | line 7\n...\n"
                             "48 | line 48\n49 | line 49\n50 | line 50\n51 | line 51\n52 | line 52\n");
    CHECK(views[0].after.find("50 | LINE 50\n51 | extra\n52 | line 51\n53 | line 52\n") != std::string::npos);

    // Wide margins merge the two regions.
    auto wide = render_before_after(b, "i", patches, 30);
    CHECK(wide[0].before.find("...") == std::string::npos);

    // Zero margin keeps only the changed lines.
    auto tight = render_before_after(b, "i", patches, 0);
    CHECK(tight[0].before == " 5 | line 5\n...\n50 | line 50\n");
}

TEST_CASE("empty lines render without trailing space")
{
    FileBundle b;
    b.add("i", "f", "a\n\nc\n");
    auto patches = parse_unified_diff("--- a/f\n+++ b/f\n@@ -3 +3 @@\n-c\n+C\n");
    auto views = render_before_after(b, "i", patches, 5);
    CHECK(views[0].before == "1 | a\n2 |\n3 | c\n");
}

TEST_CASE("random edits agree with the line-splice oracle")
{
    testsupport::EditGenerator g(2024);
    for (int t = 0; t < 200; ++t) {
        FileBundle bundle;
        std::string text;
        std::vector<testsupport::FileCase> cases;
        auto files = g.pick(1, 3);
        for (std::size_t f = 0; f < files; ++f) {
            auto fc = g.file_case(fmt::format("src/f{}.txt", f));
            if (fc.kind != testsupport::FileKind::create) {
                bundle.add("i", fc.path, testsupport::render_lines(fc.before));
            }
            text += testsupport::write_diff(fc);
            cases.push_back(std::move(fc));
        }
        CAPTURE(text);
        auto patches = parse_unified_diff(text);
        auto out = apply_patch(bundle, "i", patches);
        for (auto const & fc : cases) {
            if (fc.kind == testsupport::FileKind::remove) {
                CHECK(out.count(fc.path) == 0);
            } else {
                CHECK(out.at(fc.path) == testsupport::render_lines(fc.after));
            }
        }
        auto serialized = serialize_unified_diff(patches);
        CHECK(parse_unified_diff(serialized) == patches);
        CHECK(serialize_unified_diff(parse_unified_diff(serialized)) == serialized);
    }
}
