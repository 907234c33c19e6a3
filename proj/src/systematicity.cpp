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

#include "auditor/systematicity.hpp"

#include <algorithm>

#include "auditor/error.hpp"
#include "auditor/parallel.hpp"

namespace auditor {
namespace {

double MeanCosine(const EmbeddingVector& query,
                  std::span<const EmbeddingVector> neighbors) {
  if (neighbors.empty()) {
    Fail(ErrorCode::kEmptyNeighborhood, "no neighbors to average over");
  }
  double sum = 0.0;
  for (const auto& n : neighbors) sum += CosineRaw(query.values, n.values);
  return sum / static_cast<double>(neighbors.size());
}

void RequireSpace(const EmbeddingVector& v, std::string_view space,
                  std::string_view role) {
  if (v.space_id != space) {
    Fail(ErrorCode::kSpaceMismatch, std::string(role) + " must be in " +
                                        std::string(space) + ", got " +
                                        v.space_id);
  }
}

}  // namespace

ClassPrompt MakeClassPrompt(const SemanticClass& cls, std::string_view tmpl) {
  static constexpr std::string_view kSlot = "{class}";
  std::string text(tmpl);
  for (auto pos = text.find(kSlot); pos != std::string::npos;
       pos = text.find(kSlot, pos + cls.Prompt().size())) {
    text.replace(pos, kSlot.size(), cls.Prompt());
  }
  return {cls, text};
}

double Sigma1(const EmbeddingVector& query,
              std::span<const EmbeddingVector> neighbor_images) {
  if (query.space_id != kJointTextSpace && query.space_id != kJointImageSpace) {
    Fail(ErrorCode::kSpaceMismatch,
         "sigma1 query must be a joint-space embedding, got " + query.space_id);
  }
  for (const auto& n : neighbor_images) RequireSpace(n, kJointImageSpace, "sigma1 neighbor");
  return MeanCosine(query, neighbor_images);
}

double Sigma2(const EmbeddingVector& query_sentence,
              std::span<const EmbeddingVector> neighbor_sentences) {
  RequireSpace(query_sentence, kSentenceSpace, "sigma2 query");
  for (const auto& n : neighbor_sentences) RequireSpace(n, kSentenceSpace, "sigma2 neighbor");
  return MeanCosine(query_sentence, neighbor_sentences);
}

double Sigma3(const EmbeddingVector& query_sentence,
              const EmbeddingVector& class_prompt) {
  RequireSpace(query_sentence, kSentenceSpace, "sigma3 query");
  return Cosine(query_sentence, class_prompt);
}

int Omega(double s1, double s2, double s3, double alpha) {
  return (s1 + s2) - s3 >= alpha ? 1 : 0;
}

double Calibration::Apply(double s) const {
  if (IsIdentity()) return s;
  return std::clamp(scale * s + offset, -1.0, 1.0);
}

Json ScoreToJson(const SystematicityScore& s) {
  return Json{{"patch_id", s.patch_id},
              {"class", s.class_name},
              {"neighbor_ids", s.neighbor_ids},
              {"neighbor_similarities", s.neighbor_similarities},
              {"sigma1", s.sigma1},
              {"sigma2", s.sigma2},
              {"sigma3", s.sigma3},
              {"omega", s.omega},
              {"alpha", s.alpha},
              {"q", s.q},
              {"caption", s.caption}};
}

SystematicityScore ScoreFromJson(const Json& j) {
  SystematicityScore s;
  try {
    s.patch_id = j.at("patch_id").get<std::string>();
    s.class_name = j.at("class").get<std::string>();
    s.neighbor_ids = j.at("neighbor_ids").get<std::vector<std::string>>();
    s.neighbor_similarities =
        j.at("neighbor_similarities").get<std::vector<double>>();
    s.sigma1 = j.at("sigma1").get<double>();
    s.sigma2 = j.at("sigma2").get<double>();
    s.sigma3 = j.at("sigma3").get<double>();
    s.omega = j.at("omega").get<int>();
    s.alpha = j.at("alpha").get<double>();
    s.q = j.at("q").get<int>();
    s.caption = j.at("caption").get<std::string>();
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kIo, std::string("score record: ") + e.what());
  }
  return s;
}

SystematicityScore ScorePatch(const std::string& patch_id,
                              const EmbeddingMatrix& index,
                              const CaptionLookup& captions, Oracle& oracle,
                              const ScoringOptions& options,
                              const SemanticClass& cls,
                              const EmbeddingVector& prompt_embedding) {
  if (index.rows() == 1) {
    Fail(ErrorCode::kSingletonErrorSet,
         "class '" + cls.name + "' has a single error patch; no neighborhood");
  }
  const NeighborList nn = Knn(index, patch_id, options.q);

  SystematicityScore s;
  s.patch_id = patch_id;
  s.class_name = cls.name;
  s.neighbor_ids = nn.neighbor_ids;
  s.neighbor_similarities = nn.similarities;
  s.alpha = options.alpha;
  s.q = options.q;
  s.caption = captions(patch_id);

  std::vector<EmbeddingVector> neighbor_images;
  std::vector<EmbeddingVector> neighbor_sentences;
  for (const auto& id : nn.neighbor_ids) {
    neighbor_images.push_back(index.RowVector(*index.IndexOf(id)));
    neighbor_sentences.push_back(oracle.EncodeSentence(captions(id)));
  }
  const EmbeddingVector query_joint =
      options.sigma1_query_from_image ? index.RowVector(*index.IndexOf(patch_id))
                                      : oracle.EmbedText(s.caption);
  const EmbeddingVector query_sentence = oracle.EncodeSentence(s.caption);

  s.sigma1 = options.sigma1_calibration.Apply(Sigma1(query_joint, neighbor_images));
  s.sigma2 = options.sigma2_calibration.Apply(Sigma2(query_sentence, neighbor_sentences));
  s.sigma3 = options.sigma3_calibration.Apply(Sigma3(query_sentence, prompt_embedding));
  s.omega = Omega(s.sigma1, s.sigma2, s.sigma3, options.alpha);
  return s;
}

std::vector<SystematicityScore> ScoreAll(const EmbeddingMatrix& index,
                                         const CaptionLookup& captions,
                                         Oracle& oracle,
                                         const ScoringOptions& options,
                                         const SemanticClass& cls,
                                         std::size_t workers) {
  if (index.rows() == 0) {
    Fail(ErrorCode::kEmptyErrorSet, "class '" + cls.name + "' has no error patches");
  }
  if (index.rows() == 1) {
    Fail(ErrorCode::kSingletonErrorSet,
         "class '" + cls.name + "' has a single error patch; no neighborhood");
  }
  const EmbeddingVector prompt = oracle.EncodeSentence(
      MakeClassPrompt(cls, options.prompt_template).text);
  std::vector<SystematicityScore> out(index.rows());
  ParallelFor(index.rows(), workers, [&](std::size_t i) {
    try {
      out[i] = ScorePatch(index.ids[i], index, captions, oracle, options, cls,
                          prompt);
    } catch (const Error& e) {
      Rethrow(e, "patch " + index.ids[i]);
    }
  });
  return out;
}

}  // namespace auditor
