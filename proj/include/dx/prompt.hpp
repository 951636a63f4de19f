// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>

#include "dx/vocab.hpp"

namespace dx {

enum class PromptKind { kTeacherLabeling, kFineTune };

/// A prompt body with exactly one impression placeholder and one
/// pathology-list placeholder.
struct PromptTemplate {
  PromptKind kind;
  std::string_view body;
  std::string_view impression_placeholder;
  std::string_view list_placeholder;
};

/// Teacher (CSV with DEFINITE/POSSIBLE/ABSENT) labeling prompt.
const PromptTemplate& teacher_template();
/// Student fine-tune prompt (comma-separated names).
const PromptTemplate& finetune_template();
const PromptTemplate& template_for(PromptKind kind);

/// Canonical names in id order joined by ", ".
std::string pathology_list(const Vocabulary& vocab);

/// Substitutes the impression verbatim and the pathology list; no other
/// bytes change. Throws EmptyImpression for blank impressions.
std::string render(const PromptTemplate& tmpl, std::string_view impression,
                   const Vocabulary& vocab);

}  // namespace dx
