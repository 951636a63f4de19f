// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <random>

#include "dx/error.hpp"
#include "dx/prompt.hpp"
#include "dx/store.hpp"
#include "support/oracles.hpp"

using namespace dx;
namespace fs = std::filesystem;

namespace {

const Vocabulary& shipped() {
  static const Vocabulary v = load_vocabulary(DX_SOURCE_DIR "/data/vocabulary.tsv");
  return v;
}

PathologyId id_of(std::string_view name) { return shipped().lookup(name)->id; }

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("dx_store_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

template <typename Fn>
Error error_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::kIoError, "");
}

}  // namespace

TEST_CASE("ingest three valid lines in order") {
  const auto recs = parse_reports(
      R"({"report_id":"a","modality":"MR","anatomy":"knee","impression":"Meniscal tear."}
{"report_id":"b","modality":"CR","impression":"No fracture."}

{"report_id":"c","modality":"other","impression":"Gout."}
)");
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].report_id == "a");
  CHECK(recs[0].anatomy == "knee");
  CHECK(recs[1].modality == Modality::kCR);
  CHECK(!recs[1].anatomy);
  CHECK(recs[2].modality == Modality::kOther);
}

TEST_CASE("ingest errors name the line") {
  const auto dup = error_of([] {
    parse_reports(R"({"report_id":"a","modality":"MR","impression":"x"}
{"report_id":"a","modality":"MR","impression":"y"}
)");
  });
  CHECK(dup.code() == ErrorCode::kDuplicateId);
  CHECK(std::string(dup.what()).find("line 2") != std::string::npos);

  const auto missing = error_of([] { parse_reports(R"({"report_id":"a","modality":"MR"})"); });
  CHECK(missing.code() == ErrorCode::kMissingField);
  CHECK(std::string(missing.what()).find("impression") != std::string::npos);

  CHECK(error_of([] { parse_reports("{\"report_id\": "); }).code() == ErrorCode::kMalformedJson);
  CHECK(error_of([] { parse_reports(R"({"report_id":"a","modality":"MR","impression":"  "})"); }).code() ==
        ErrorCode::kMissingField);
  CHECK(error_of([] { parse_reports(R"({"report_id":"a","modality":"PET","impression":"x"})"); }).code() ==
        ErrorCode::kMalformedJson);
}

TEST_CASE("reports, label sets and runs round-trip") {
  const auto reports = testing::synthetic_reports(25, 3);
  CHECK(parse_reports(serialize_reports(reports)) == reports);

  std::vector<LabelSet> sets(3);
  sets[0] = {"r1", {1, 5}, {}, Provenance::kGold};
  sets[1] = {"r2", {}, {"bone dragon", "green fever"}, Provenance::kTeacherVote};
  sets[2] = {"r3", {120}, {}, Provenance::kModelPrediction};
  CHECK(parse_label_sets(serialize_label_sets(sets)) == sets);

  const std::vector<RunRecord> runs{{"r1", 0, std::string("text\nwith lines"), std::nullopt},
                                    {"r1", 1, std::nullopt, std::string("BackendUnavailable: down")}};
  const auto back = parse_run_records(serialize_run_records(runs));
  REQUIRE(back.size() == 2);
  CHECK(back[0].raw_text == runs[0].raw_text);
  CHECK(!back[1].raw_text);
  CHECK(back[1].error == runs[1].error);
}

TEST_CASE("fine-tune pairs") {
  const std::vector<ReportRecord> reports{{"r1", Modality::kMR, {}, "Gout and cellulitis."},
                                          {"r2", Modality::kCR, {}, "Normal."}};
  std::map<std::string, LabelSet> labels;
  labels["r1"] = {"r1", {id_of("gout"), id_of("cellulitis")}, {}, Provenance::kTeacherVote};
  labels["r2"] = {"r2", {}, {}, Provenance::kTeacherVote};
  const auto pairs = emit_finetune_pairs(reports, labels, shipped());
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].completion == "cellulitis, gout");
  CHECK(pairs[1].completion == "None");
  CHECK(pairs[0].prompt == render(finetune_template(), "Gout and cellulitis.", shipped()));
  CHECK(parse_finetune_pairs(serialize_finetune_pairs(pairs)).size() == 2);

  labels.erase("r2");
  const auto e = error_of([&] { emit_finetune_pairs(reports, labels, shipped()); });
  CHECK(e.code() == ErrorCode::kMissingLabels);
  CHECK(std::string(e.what()).find("r2") != std::string::npos);
}

TEST_CASE("completions parse back to their label sets") {
  std::mt19937_64 rng(11);
  const auto& entries = shipped().entries();
  std::vector<ReportRecord> reports;
  std::map<std::string, LabelSet> labels;
  for (int i = 0; i < 100; ++i) {
    const auto id = "x" + std::to_string(i);
    reports.push_back({id, Modality::kOther, {}, "Impression " + id});
    LabelSet s{id, {}, {}, Provenance::kTeacherVote};
    const auto n = rng() % 6;
    for (std::size_t k = 0; k < n; ++k) s.labels.insert(entries[rng() % entries.size()].id);
    labels[id] = s;
  }
  const auto pairs = emit_finetune_pairs(reports, labels, shipped());
  REQUIRE(pairs.size() == reports.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(parse_student_list(pairs[i].completion, shipped()).labels == labels.at(reports[i].report_id).labels);
  }
}

TEST_CASE("assignment files") {
  SplitAssignment a;
  a.part_count = 2;
  a.report_ids = {"a", "b", "c"};
  a.part_of = {1, 0, 1};
  const auto back = parse_assignment(serialize_assignment(a), 2);
  CHECK(back.part_of == a.part_of);
  CHECK(back.report_ids == a.report_ids);
  CHECK(error_of([&] { parse_assignment(serialize_assignment(a), 1); }).code() == ErrorCode::kMalformedJson);
}

TEST_CASE("digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("atomic writes create parent directories") {
  TempDir dir;
  const auto file = dir.path / "a" / "b" / "out.txt";
  write_text_file(file, "hello");
  CHECK(read_text_file(file) == "hello");
  write_text_file(file, "again");
  CHECK(read_text_file(file) == "again");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(file.parent_path())) ++entries;
  CHECK(entries == 1);
  CHECK(error_of([&] { read_text_file(dir.path / "missing"); }).code() == ErrorCode::kIoError);
}

TEST_CASE("manifests") {
  TempDir dir;
  write_text_file(dir.path / "labels.jsonl", "{}\n");
  write_text_file(dir.path / "runs.jsonl", "[]\n");
  ManifestInputs in;
  in.command = "label";
  in.backend = "mock(seed=1)";
  in.settings = {{"vote_mode", "set"}, {"seed", "1"}};
  in.outputs = {{"labels", dir.path / "labels.jsonl"}, {"runs", dir.path / "runs.jsonl"}};
  in.base_dir = dir.path;
  in.vocabulary_text = "1\tgout\tX\t\n";

  auto a = build_manifest(in);
  auto b = build_manifest(in);
  CHECK(a["outputs"]["labels"]["path"] == "labels.jsonl");
  a.erase("created_at");
  b.erase("created_at");
  CHECK(a.dump() == b.dump());

  auto changed = in;
  changed.settings["vote_mode"] = "per-label";
  auto c = build_manifest(changed);
  c.erase("created_at");
  CHECK(c["settings"]["vote_mode"] != a["settings"]["vote_mode"]);

  write_manifest(dir.path / "manifest.json", in);
  CHECK(verify_manifest(dir.path / "manifest.json").empty());

  // Relocated folders still verify.
  const auto moved = dir.path.string() + "_moved";
  fs::rename(dir.path, moved);
  CHECK(verify_manifest(fs::path(moved) / "manifest.json").empty());
  write_text_file(fs::path(moved) / "labels.jsonl", "changed\n");
  CHECK(verify_manifest(fs::path(moved) / "manifest.json") == std::vector<std::string>{"labels"});
  fs::rename(moved, dir.path);
}
