// SPDX-License-Identifier: Apache-2.0

#include "dx/prompt.hpp"

#include "dx/error.hpp"

namespace dx {
namespace {

// Byte-exact transcriptions; tests/prompt_test.cpp compares them against
// templates/*.txt.
constexpr std::string_view kTeacherBody =
    R"dx(You are a musculoskeletal radiologist reading the radiology impression below. Your task is to list only those pathologic conditions from the list of pathologies below that are explicitly mentioned in the radiology impression as either possible or definite. The pathology should be included strictly if it is specifically named in the report. Do not infer the presence or absence of a pathology that is not explicitly named in the report. If a pathology is not clearly mentioned, it should not be included in the output. If a pathology is specifically excluded with phrases such as "no fracture", or "without evidence of", or "no evidence of", or "without", or "within normal limits", please list that pathology as ABSENT. Present your answer in a CSV format with the columns PathologyID, PathologyName, and Word. Use 'DEFINITE' as the "Word" if the pathology is explicitly mentioned as confirmed present, and 'POSSIBLE' if the pathology is explicitly suggested as a possibility. If a pathology is explicitly excluded, list it as 'ABSENT'. Please explain your answers. BEGIN RADIOLOGY IMPRESSION {IMPRESSION} END RADIOLOGY IMPRESSION List of Pathologies: {LIST OF PATHOLOGIES}.)dx";

constexpr std::string_view kFineTuneBody =
    R"dx(Fine-tune Prompt: You are a musculoskeletal radiologist. Your task is to list only those pathologic conditions from the list of pathologies that are explicitly mentioned in the radiology impression as either possible or definite. The pathology should be included strictly if it is specifically named in the report. Do not infer the presence or absence of a pathology that is not explicitly named in the report. If a pathology is not clearly mentioned, it should not be included in the output. If a pathology is specifically excluded with phrases such as "no fracture", or "without evidence of", or "no evidence of", or "without", or "within normal limits", please do not list that pathology. Present your answer in a comma-separated list of pathology names. Include the pathology name in the output list if it is explicitly mentioned as confirmed present, or if it is explicitly suggested as a possibility. If a pathology is explicitly excluded, exclude it from the output list. BEGIN RADIOLOGY IMPRESSION {IMPRESSION} END RADIOLOGY IMPRESSION.  Here is a List of Pathologies: {lis_of_pathologies}.)dx";
bool is_blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

}  // namespace

const PromptTemplate& teacher_template() {
  static const PromptTemplate t{PromptKind::kTeacherLabeling, kTeacherBody,
                                "{IMPRESSION}", "{LIST OF PATHOLOGIES}"};
  return t;
}

const PromptTemplate& finetune_template() {
  static const PromptTemplate t{PromptKind::kFineTune, kFineTuneBody,
                                "{IMPRESSION}", "{lis_of_pathologies}"};
  return t;
}

const PromptTemplate& template_for(PromptKind kind) {
  return kind == PromptKind::kTeacherLabeling ? teacher_template()
                                              : finetune_template();
}

std::string pathology_list(const Vocabulary& vocab) {
  std::string out;
  for (const auto& e : vocab.entries()) {
    if (!out.empty()) out += ", ";
    out += e.canonical_name;
  }
  return out;
}

std::string render(const PromptTemplate& tmpl, std::string_view impression,
                   const Vocabulary& vocab) {
  if (is_blank(impression)) {
    throw Error(ErrorCode::kEmptyImpression, "impression is empty");
  }
  const auto list = pathology_list(vocab);
  const auto body = tmpl.body;
  const auto imp_pos = body.find(tmpl.impression_placeholder);
  const auto list_pos = body.find(tmpl.list_placeholder);
  if (imp_pos == std::string_view::npos || list_pos == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "template is missing a placeholder");
  }

  std::string out;
  out.reserve(body.size() + impression.size() + list.size());
  // Substitute in positional order so neither replacement is rescanned.
  const bool impression_first = imp_pos < list_pos;
  const auto first_pos = impression_first ? imp_pos : list_pos;
  const auto first_len = impression_first ? tmpl.impression_placeholder.size()
                                          : tmpl.list_placeholder.size();
  const auto second_pos = impression_first ? list_pos : imp_pos;
  const auto second_len = impression_first ? tmpl.list_placeholder.size()
                                           : tmpl.impression_placeholder.size();
  out.append(body.substr(0, first_pos));
  out.append(impression_first ? impression : std::string_view(list));
  out.append(body.substr(first_pos + first_len,
                         second_pos - first_pos - first_len));
  out.append(impression_first ? std::string_view(list) : impression);
  out.append(body.substr(second_pos + second_len));
  return out;
}

}  // namespace dx
