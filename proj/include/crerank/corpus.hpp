#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crerank/errors.hpp"
#include "crerank/types.hpp"

namespace crerank {

struct RawEvent {
  std::string session_id;
  std::int64_t timestamp_ms = 0;
  std::string item_id;
};

struct ParseReport {
  std::size_t rows = 0;     // data rows seen (header excluded)
  std::size_t events = 0;   // events emitted
  std::size_t skipped = 0;  // malformed rows dropped
  std::vector<std::string> warnings;  // first few skip reasons
};

// One (history, next item) training or test pair.
struct SessionExample {
  std::vector<ItemIndex> history;
  ItemIndex target = 0;
};

// Bijection raw item id <-> dense index, indices contiguous from 0.
class ItemVocab {
 public:
  ItemIndex add(const std::string& raw_id);
  std::optional<ItemIndex> find(const std::string& raw_id) const;
  const std::string& raw_id(ItemIndex idx) const { return index_to_id_.at(idx); }
  std::size_t size() const { return index_to_id_.size(); }
  const std::vector<std::string>& raw_ids() const { return index_to_id_; }

 private:
  std::vector<std::string> index_to_id_;
  std::unordered_map<std::string, ItemIndex> id_to_index_;
};

struct PreprocessConfig {
  std::string dataset = "generic";
  std::string recipe = "generic";     // yoochoose | diginetica | generic
  std::uint32_t min_item_support = 5;
  std::uint32_t test_window_days = 1;
  double train_keep_fraction = 1.0;   // yoochoose 1/4 keeps the most recent quarter
  std::uint32_t max_len = 0;          // 0 = unlimited history
};

struct CorpusMeta {
  std::string dataset;
  std::string recipe;
  std::uint64_t config_hash = 0;
  std::uint32_t max_len = 0;
};

struct ProcessedCorpus {
  ItemVocab vocab;
  // Full post-filter sessions, kept for co-occurrence counting; the
  // augmented examples below are derived from them.
  std::vector<std::vector<ItemIndex>> train_sessions;
  std::vector<std::vector<ItemIndex>> test_sessions;
  std::vector<SessionExample> train;
  std::vector<SessionExample> test;
  CorpusMeta meta;

  // Prefix augmentation: a session of length m yields m-1 examples,
  // histories truncated to the meta.max_len most recent items.
  void rebuild_examples();
  std::uint64_t content_hash() const;
};

// yoochoose-clicks.dat: session_id,timestamp(ISO-8601),item_id,category
std::vector<RawEvent> parse_yoochoose(const std::string& path, ParseReport* report = nullptr);

// train-item-views.csv: sessionId;userId;itemId;timeframe;eventdate
// Events come out ordered within each session by timeframe.
std::vector<RawEvent> parse_diginetica(const std::string& path, ParseReport* report = nullptr);

// Generic sessions CSV with required header: session_id,timestamp,item_id
// (timestamp ISO-8601 or integer epoch milliseconds).
std::vector<RawEvent> parse_generic_csv(const std::string& path, ParseReport* report = nullptr);

ProcessedCorpus preprocess(const std::vector<RawEvent>& events, const PreprocessConfig& cfg);

// Binary corpus container, versioned; write also emits a JSON sidecar at
// path + ".json" with audit counts. Round trips are byte-stable.
void write_corpus(const ProcessedCorpus& corpus, const std::string& path);
ProcessedCorpus read_corpus(const std::string& path);

// "2014-04-07T10:51:09.277Z" -> epoch milliseconds.
std::optional<std::int64_t> parse_iso8601_ms(const std::string& text);

std::uint64_t preprocess_config_hash(const PreprocessConfig& cfg);

}  // namespace crerank
