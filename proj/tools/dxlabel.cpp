// SPDX-License-Identifier: Apache-2.0
//
// dxlabel: teacher labeling, voting, splitting, fine-tune emission,
// evaluation and adapter utilities for radiology impression labeling.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dx/commands.hpp"

namespace {

using namespace dx;
using namespace dx::cli;

VoteMode to_vote_mode(const std::string& text) {
  const auto mode = parse_vote_mode(text);
  if (!mode) throw Error(ErrorCode::kInvalidArgument, "unknown vote mode: " + text);
  return *mode;
}

void add_eval_flags(CLI::App* sub, EvalCommandOptions& o, bool& oov_fp, std::string& scope,
                    bool& strict_missing) {
  sub->add_option("--gold", o.gold, "gold labels JSONL")->required()->check(CLI::ExistingFile);
  sub->add_option("--predictions", o.predictions, "predicted labels or raw outputs JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--corpus", o.corpus, "reports JSONL supplying modality")->check(CLI::ExistingFile);
  sub->add_option("--vocab", o.vocab, "vocabulary TSV")->check(CLI::ExistingFile);
  sub->add_option("--json", o.json_out, "write results as JSON");
  sub->add_flag("--count-oov-as-fp,!--no-count-oov-as-fp", oov_fp,
                "count out-of-vocabulary predictions as false positives");
  sub->add_option("--macro-scope", scope, "classes in the macro average")
      ->check(CLI::IsMember({"supported", "observed"}));
  sub->add_flag("--strict-missing", strict_missing, "fail when a gold report has no prediction");
}

void finish_eval_flags(EvalCommandOptions& o, bool oov_fp, const std::string& scope,
                       bool strict_missing) {
  o.metrics.count_oov_as_fp = oov_fp;
  o.metrics.macro_scope = scope == "observed" ? MacroScope::kObserved : MacroScope::kSupported;
  o.missing = strict_missing ? MissingPolicy::kError : MissingPolicy::kScoreEmpty;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher labeling and evaluation pipeline for radiology impressions", "dxlabel"};
  app.require_subcommand(1);

  // label
  LabelOptions label;
  std::string label_backend = "mock";
  std::string label_vote = "set";
  auto* label_cmd = app.add_subcommand("label", "query a teacher model and vote labels per report");
  label_cmd->add_option("--corpus", label.corpus, "reports JSONL")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--vocab", label.vocab, "vocabulary TSV")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--out", label.out_dir, "output directory")->required();
  label_cmd->add_option("--backend", label_backend, "completion backend")
      ->check(CLI::IsMember({"mock", "http"}));
  label_cmd->add_option("--runs", label.runs, "runs per report (odd)");
  label_cmd->add_option("--temperature", label.temperature, "sampling temperature");
  label_cmd->add_option("--vote", label_vote, "vote rule")->check(CLI::IsMember({"set", "per-label"}));
  label_cmd->add_option("--seed", label.seed, "mock backend seed");
  label_cmd->add_option("--max-in-flight", label.max_in_flight, "concurrent requests")
      ->check(CLI::PositiveNumber);
  label_cmd->add_option("--model", label.model, "model name sent to the backend");
  label_cmd->add_option("--max-tokens", label.max_tokens, "completion token limit");
  label_cmd->add_option("--flip-probability", label.flip_probability, "mock label noise")
      ->check(CLI::Range(0.0, 1.0));
  label_cmd->add_option("--oov-probability", label.oov_probability, "mock unlisted-name rate")
      ->check(CLI::Range(0.0, 1.0));

  // vote
  VoteOptions vote;
  std::string vote_mode = "set";
  auto* vote_cmd = app.add_subcommand("vote", "re-vote persisted raw runs");
  vote_cmd->add_option("--runs-file", vote.runs_file, "runs JSONL")->required()->check(CLI::ExistingFile);
  vote_cmd->add_option("--vocab", vote.vocab, "vocabulary TSV")->required()->check(CLI::ExistingFile);
  vote_cmd->add_option("--out", vote.out, "labels JSONL")->required();
  vote_cmd->add_option("--vote", vote_mode, "vote rule")->check(CLI::IsMember({"set", "per-label"}));

  // split
  SplitOptions split;
  std::string split_order = "first";
  auto* split_cmd = app.add_subcommand("split", "stratified train/test split of labeled reports");
  split_cmd->add_option("--labels", split.labels, "labels JSONL")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out", split.out_dir, "output directory")->required();
  split_cmd->add_option("--ratios", split.spec.ratios, "part fractions")->delimiter(',');
  split_cmd->add_option("--seed", split.spec.seed, "tie-break seed");
  split_cmd->add_option("--order", split_order, "stratification order")
      ->check(CLI::IsMember({"first", "second"}));

  // emit-finetune
  EmitOptions emit;
  auto* emit_cmd = app.add_subcommand("emit-finetune", "write prompt/completion pairs");
  emit_cmd->add_option("--corpus", emit.corpus, "reports JSONL")->required()->check(CLI::ExistingFile);
  emit_cmd->add_option("--labels", emit.labels, "labels JSONL")->required()->check(CLI::ExistingFile);
  emit_cmd->add_option("--vocab", emit.vocab, "vocabulary TSV")->required()->check(CLI::ExistingFile);
  emit_cmd->add_option("--out", emit.out, "pairs JSONL")->required();
  emit_cmd->add_option("--assignment", emit.assignment, "split assignment JSONL")
      ->check(CLI::ExistingFile);
  emit_cmd->add_option("--part", emit.part, "split part to emit");

  // eval
  EvalCommandOptions eval;
  bool eval_oov_fp = true;
  std::string eval_scope = "supported";
  bool eval_strict = false;
  auto* eval_cmd = app.add_subcommand("eval", "score predictions against gold labels");
  add_eval_flags(eval_cmd, eval, eval_oov_fp, eval_scope, eval_strict);

  // errors
  ErrorsOptions errors;
  bool errors_oov_fp = true;
  std::string errors_scope = "supported";
  bool errors_strict = false;
  auto* errors_cmd = app.add_subcommand("errors", "most frequent missed/spurious label pairs");
  add_eval_flags(errors_cmd, errors.eval, errors_oov_fp, errors_scope, errors_strict);
  errors_cmd->add_option("--top", errors.top_k, "pairs to list");

  // param-count
  ParamCountOptions params;
  auto* params_cmd = app.add_subcommand("param-count", "count trainable low-rank adapter parameters");
  params_cmd->add_option("--arch", params.arch, "architecture JSON")->required()->check(CLI::ExistingFile);
  params_cmd->add_option("--rank", params.rank, "adapter rank")->check(CLI::PositiveNumber);
  params_cmd->add_option("--alpha", params.alpha, "adapter alpha");

  // quantize
  QuantizeOptions quant;
  auto* quant_cmd = app.add_subcommand("quantize", "4-bit NormalFloat quantization of a tensor");
  quant_cmd->add_option("--input", quant.input, "tensor (.bin DXTENSOR or .txt)")
      ->required()
      ->check(CLI::ExistingFile);
  quant_cmd->add_option("--out", quant.out, "quantized output")->required();
  quant_cmd->add_option("--block-size", quant.block_size, "elements per absmax block")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*label_cmd) {
      label.backend = label_backend == "http" ? BackendKind::kHttp : BackendKind::kMock;
      label.vote_mode = to_vote_mode(label_vote);
      return cmd_label(label, std::cerr).exit_code;
    }
    if (*vote_cmd) {
      vote.vote_mode = to_vote_mode(vote_mode);
      return cmd_vote(vote, std::cerr).exit_code;
    }
    if (*split_cmd) {
      split.spec.order = *parse_stratification_order(split_order);
      cmd_split(split, std::cerr);
      return kExitOk;
    }
    if (*emit_cmd) {
      cmd_emit_finetune(emit, std::cerr);
      return kExitOk;
    }
    if (*eval_cmd) {
      finish_eval_flags(eval, eval_oov_fp, eval_scope, eval_strict);
      cmd_eval(eval, std::cout);
      return kExitOk;
    }
    if (*errors_cmd) {
      finish_eval_flags(errors.eval, errors_oov_fp, errors_scope, errors_strict);
      cmd_errors(errors, std::cout);
      return kExitOk;
    }
    if (*params_cmd) {
      cmd_param_count(params, std::cout);
      return kExitOk;
    }
    if (*quant_cmd) {
      cmd_quantize(quant, std::cout);
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
