#include "arf/anchors.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace arf {

TableCaptionProvider::TableCaptionProvider(std::span<const CaptionRecord> records) {
  for (const auto& r : records) by_id_.insert_or_assign(r.sample_id, r.caption_feature);
}

std::optional<Vector> TableCaptionProvider::caption(const Sample& sample) const {
  auto it = by_id_.find(sample.id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<CaptionRecord> attach_captions(std::span<const Sample> samples,
                                           const CaptionProvider& provider) {
  std::vector<CaptionRecord> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    auto cap = provider.caption(s);
    if (!cap) throw MissingCaptionError("no caption for sample " + std::to_string(s.id));
    out.push_back({s.id, std::move(*cap)});
  }
  return out;
}

CandidateIndex build_candidate_index(const Checkpoint& ckpt,
                                     std::span<const CandidatePair> candidates) {
  if (candidates.empty()) throw InvalidArgumentError("candidate list is empty");
  const std::size_t d = ckpt.params.image.embed_dim();
  CandidateIndex index{{}, Matrix(candidates.size(), d), Matrix(candidates.size(), d), ckpt.id};
  index.candidate_ids.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    index.candidate_ids.push_back(c.id);
    index.image_embeddings.set_row(i, encode(ckpt.params, Modality::image, c.image_feature));
    index.text_embeddings.set_row(i, encode(ckpt.params, Modality::text, c.text_feature));
  }
  return index;
}

std::string_view to_string(RetrievalMode m) {
  switch (m) {
    case RetrievalMode::v2t: return "v2t";
    case RetrievalMode::v2v: return "v2v";
    case RetrievalMode::t2t: return "t2t";
    case RetrievalMode::t2v: return "t2v";
  }
  return "?";
}

RetrievalMode parse_retrieval_mode(std::string_view s) {
  for (auto m : {RetrievalMode::v2t, RetrievalMode::v2v, RetrievalMode::t2t, RetrievalMode::t2v})
    if (s == to_string(m)) return m;
  throw InvalidArgumentError("unknown retrieval mode '" + std::string(s) + "'");
}

namespace {

Modality query_side(RetrievalMode m) {
  return m == RetrievalMode::v2t || m == RetrievalMode::v2v ? Modality::image : Modality::text;
}

Modality index_side(RetrievalMode m) {
  return m == RetrievalMode::v2t || m == RetrievalMode::t2t ? Modality::text : Modality::image;
}

}  // namespace

std::vector<RetrievalQuery> make_retrieval_queries(std::span<const Sample> samples,
                                                   const PromptTable& prompts, RetrievalMode mode) {
  std::vector<RetrievalQuery> out;
  out.reserve(samples.size());
  const bool image_query = query_side(mode) == Modality::image;
  for (const auto& s : samples) {
    if (image_query) {
      out.push_back({s.id, s.feature});
    } else {
      auto p = prompts.prompt(s.class_id);
      out.push_back({s.id, Vector(p.begin(), p.end())});
    }
  }
  return out;
}

std::vector<std::size_t> top_k_by_score(std::span<const double> scores,
                                        std::span<const SampleId> ids, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    better);
  order.resize(k);
  return order;
}

std::vector<RetrievalAssignment> retrieve(const CandidateIndex& index,
                                          std::span<const RetrievalQuery> queries,
                                          const Checkpoint& ckpt, RetrievalMode mode,
                                          std::size_t k) {
  if (k < 1 || k > index.size()) {
    throw InvalidArgumentError("retrieval k=" + std::to_string(k) + " outside [1, " +
                               std::to_string(index.size()) + "]");
  }
  if (index.source_checkpoint_id != ckpt.id) {
    throw CheckpointMismatchError("candidate index was built from checkpoint " +
                                  index.source_checkpoint_id + ", not " + ckpt.id);
  }
  const Matrix& side =
      index_side(mode) == Modality::text ? index.text_embeddings : index.image_embeddings;
  const Modality qm = query_side(mode);

  std::vector<RetrievalAssignment> out;
  out.reserve(queries.size() * k);
  Vector scores(index.size());
  for (const auto& q : queries) {
    const Vector e = encode(ckpt.params, qm, q.feature);
    for (std::size_t i = 0; i < index.size(); ++i) scores[i] = dot(e, side.row(i));
    const auto best = top_k_by_score(scores, index.candidate_ids, k);
    for (std::size_t r = 0; r < best.size(); ++r) {
      out.push_back({q.sample_id, index.candidate_ids[best[r]], scores[best[r]], mode, r});
    }
  }
  return out;
}

std::string_view to_string(AnchorLayout l) { return l == AnchorLayout::sep ? "sep" : "merge"; }

AnchorLayout parse_anchor_layout(std::string_view s) {
  if (s == "sep") return AnchorLayout::sep;
  if (s == "merge") return AnchorLayout::merge;
  throw InvalidArgumentError("unknown anchor layout '" + std::string(s) + "'");
}

AnchorSources::AnchorSources(std::span<const CaptionRecord> captions,
                             std::span<const RetrievalAssignment> assignments,
                             std::span<const CandidatePair> candidates) {
  for (const auto& c : captions) captions_.insert_or_assign(c.sample_id, &c);
  // Assignments arrive in rank order per query; keep that order.
  for (const auto& a : assignments) assigned_[a.query_sample_id].push_back(a.candidate_id);
  for (const auto& c : candidates) candidates_.insert_or_assign(c.id, &c);
}

AnchorBatch AnchorSources::assemble(std::span<const Sample> batch, AnchorLayout layout,
                                    bool with_retrieval) const {
  AnchorBatch out;
  out.layout = layout;
  out.caption_pairs.reserve(batch.size());
  for (const auto& s : batch) {
    auto it = captions_.find(s.id);
    if (it == captions_.end()) {
      throw MissingCaptionError("batch sample " + std::to_string(s.id) + " has no caption");
    }
    out.caption_pairs.push_back({s.feature, it->second->caption_feature});
  }

  if (with_retrieval) {
    std::unordered_set<SampleId> seen;
    for (const auto& s : batch) {
      auto it = assigned_.find(s.id);
      if (it == assigned_.end()) {
        throw InvalidArgumentError("batch sample " + std::to_string(s.id) +
                                   " has no retrieval assignment");
      }
      for (SampleId cid : it->second) {
        if (!seen.insert(cid).second) continue;
        auto c = candidates_.find(cid);
        if (c == candidates_.end()) {
          throw InvalidArgumentError("retrieved candidate " + std::to_string(cid) +
                                     " is not in the candidate set");
        }
        out.retrieved_pairs.push_back({c->second->image_feature, c->second->text_feature});
        out.retrieved_ids.push_back(cid);
      }
    }
  }

  out.skip_ret = out.retrieved_pairs.size() < 2;
  if (layout == AnchorLayout::merge) {
    out.caption_pairs.insert(out.caption_pairs.end(), out.retrieved_pairs.begin(),
                             out.retrieved_pairs.end());
    out.retrieved_pairs.clear();
  }
  return out;
}

AnchorBatch assemble_anchor_batch(std::span<const Sample> batch,
                                  std::span<const CaptionRecord> captions,
                                  std::span<const RetrievalAssignment> assignments,
                                  std::span<const CandidatePair> candidates, AnchorLayout layout) {
  AnchorSources sources(captions, assignments, candidates);
  return sources.assemble(batch, layout, !assignments.empty());
}

}  // namespace arf
