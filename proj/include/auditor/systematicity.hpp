/* Copyright 2026 The Auditor Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef AUDITOR_SYSTEMATICITY_HPP_
#define AUDITOR_SYSTEMATICITY_HPP_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "auditor/embedding_index.hpp"
#include "auditor/oracle.hpp"

namespace auditor {

inline constexpr std::string_view kDefaultPromptTemplate =
    "the concept of one or many {class}";

struct ClassPrompt {
  SemanticClass cls;
  std::string text;
};

// Substitutes every "{class}" in `tmpl` with the class prompt name.
ClassPrompt MakeClassPrompt(const SemanticClass& cls,
                            std::string_view tmpl = kDefaultPromptTemplate);

// Mean cosine between the query caption's joint-space text embedding and the
// neighbors' joint-space image embeddings. The query may also be an image
// embedding (see ScoringOptions::sigma1_query_from_image).
double Sigma1(const EmbeddingVector& query,
              std::span<const EmbeddingVector> neighbor_images);

// Mean cosine between sentence embeddings of the query and neighbor captions.
double Sigma2(const EmbeddingVector& query_sentence,
              std::span<const EmbeddingVector> neighbor_sentences);

// Cosine between the query caption and the class prompt, sentence space.
double Sigma3(const EmbeddingVector& query_sentence,
              const EmbeddingVector& class_prompt);

// 1 iff s1 + s2 - s3 >= alpha.
int Omega(double s1, double s2, double s3, double alpha);

// Affine map applied to one similarity before thresholding, clamped to
// [-1, 1]. Identity by default.
struct Calibration {
  double scale = 1.0;
  double offset = 0.0;

  bool IsIdentity() const { return scale == 1.0 && offset == 0.0; }
  double Apply(double s) const;
};

struct ScoringOptions {
  int q = 3;
  double alpha = 0.35;
  std::string prompt_template = std::string(kDefaultPromptTemplate);
  // Off: the query side of sigma1 is h_text(caption). On: h_img(patch).
  bool sigma1_query_from_image = false;
  Calibration sigma1_calibration;
  Calibration sigma2_calibration;
  Calibration sigma3_calibration;
};

struct SystematicityScore {
  std::string patch_id;
  std::string class_name;
  std::vector<std::string> neighbor_ids;
  std::vector<double> neighbor_similarities;
  double sigma1 = 0;
  double sigma2 = 0;
  double sigma3 = 0;
  int omega = 0;
  double alpha = 0;
  int q = 0;
  std::string caption;

  double Margin() const { return sigma1 + sigma2 - sigma3; }
};

Json ScoreToJson(const SystematicityScore& s);
SystematicityScore ScoreFromJson(const Json& j);

using CaptionLookup = std::function<std::string(const std::string& patch_id)>;

// Scores one error patch against its neighborhood in `index`. The class
// prompt embedding is computed once by the caller and passed in. Throws
// kSingletonErrorSet when the index holds a single patch.
SystematicityScore ScorePatch(const std::string& patch_id,
                              const EmbeddingMatrix& index,
                              const CaptionLookup& captions, Oracle& oracle,
                              const ScoringOptions& options,
                              const SemanticClass& cls,
                              const EmbeddingVector& prompt_embedding);

// Every row of `index`, returned in patch_id order.
std::vector<SystematicityScore> ScoreAll(const EmbeddingMatrix& index,
                                         const CaptionLookup& captions,
                                         Oracle& oracle,
                                         const ScoringOptions& options,
                                         const SemanticClass& cls,
                                         std::size_t workers = 1);

}  // namespace auditor

#endif  // AUDITOR_SYSTEMATICITY_HPP_
