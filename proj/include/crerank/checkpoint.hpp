#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crerank/cfgen.hpp"
#include "crerank/reranker.hpp"
#include "crerank/stamp.hpp"
#include "crerank/types.hpp"

namespace crerank {

// Shared container for trained models: named float32 tensors plus, for CF
// models, the pre-calculated similarity table. Meta carries the resolved
// config snapshot and the hashes of upstream artifacts.
struct Checkpoint {
  std::string kind;  // cf | stamp | stmo | reranker
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, MatF>> tensors;  // vectors stored n x 1
  std::optional<SimilarityTable> table;
  std::uint64_t stored_hash = 0;  // payload hash, set on read/write

  const MatF* find_tensor(const std::string& name) const;
  std::string meta_or(const std::string& key, const std::string& fallback) const;
};

std::uint64_t write_checkpoint(Checkpoint& cp, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

Checkpoint checkpoint_from_table(const SimilarityTable& table);
SimilarityTable table_from_checkpoint(const Checkpoint& cp);

Checkpoint checkpoint_from_stamp(const StampParams<float>& params, EncoderKind kind,
                                 bool normalized_attention);
StampParams<float> stamp_from_checkpoint(const Checkpoint& cp);

Checkpoint checkpoint_from_reranker(const RerankerParams<float>& params);
RerankerParams<float> reranker_from_checkpoint(const Checkpoint& cp);

// Precomputed generator output for every training example, keyed by the
// (generator, corpus) pair it was derived from.
struct CandidateCache {
  std::uint64_t generator_hash = 0;
  std::uint64_t corpus_hash = 0;
  std::uint32_t k = 0;
  std::vector<std::vector<ItemIndex>> lists;  // one per training example
};

std::uint64_t write_candidate_cache(const CandidateCache& cache, const std::string& path);
CandidateCache read_candidate_cache(const std::string& path);

}  // namespace crerank
