#include "crerank/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crerank/serial.hpp"

namespace crerank {

namespace {

constexpr char kCorpusMagic[4] = {'C', 'R', 'C', 'P'};
constexpr std::uint32_t kCorpusVersion = 1;
constexpr std::int64_t kMsPerDay = 86400000;
constexpr std::size_t kMaxWarnings = 10;

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

void warn(ParseReport* report, std::size_t line_no, const std::string& why) {
  if (!report) return;
  ++report->skipped;
  if (report->warnings.size() < kMaxWarnings) {
    report->warnings.push_back("line " + std::to_string(line_no) + ": " + why);
  }
}

// Howard Hinnant's days-from-civil; valid across the proleptic Gregorian calendar.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct GroupedSession {
  std::string id;
  std::int64_t start_ms = 0;
  std::vector<std::string> items;  // in time order
};

std::vector<GroupedSession> group_sessions(const std::vector<RawEvent>& events) {
  std::unordered_map<std::string, std::vector<std::pair<std::int64_t, const std::string*>>> by_id;
  for (const auto& e : events) {
    by_id[e.session_id].emplace_back(e.timestamp_ms, &e.item_id);
  }
  std::vector<GroupedSession> sessions;
  sessions.reserve(by_id.size());
  for (auto& [id, evs] : by_id) {
    std::stable_sort(evs.begin(), evs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    GroupedSession s;
    s.id = id;
    s.start_ms = evs.front().first;
    s.items.reserve(evs.size());
    for (const auto& [ts, item] : evs) s.items.push_back(*item);
    sessions.push_back(std::move(s));
  }
  // Stable global order; the unordered_map iteration above must not leak.
  std::sort(sessions.begin(), sessions.end(), [](const GroupedSession& a, const GroupedSession& b) {
    return a.start_ms != b.start_ms ? a.start_ms < b.start_ms : a.id < b.id;
  });
  return sessions;
}

}  // namespace

std::optional<std::int64_t> parse_iso8601_ms(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s,
                  &consumed) != 6)
    return std::nullopt;
  std::int64_t ms = 0;
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    std::int64_t frac = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (digits < 3) frac = frac * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    while (digits < 3 && digits > 0) {
      frac *= 10;
      ++digits;
    }
    ms = frac;
  }
  if (pos < text.size() && text[pos] == 'Z') ++pos;
  if (pos != text.size()) return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60) return std::nullopt;
  const std::int64_t days = days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
  return ((days * 24 + h) * 60 + mi) * 60000 + s * 1000 + ms;
}

ItemIndex ItemVocab::add(const std::string& raw_id) {
  auto it = id_to_index_.find(raw_id);
  if (it != id_to_index_.end()) return it->second;
  ItemIndex idx = static_cast<ItemIndex>(index_to_id_.size());
  index_to_id_.push_back(raw_id);
  id_to_index_.emplace(raw_id, idx);
  return idx;
}

std::optional<ItemIndex> ItemVocab::find(const std::string& raw_id) const {
  auto it = id_to_index_.find(raw_id);
  if (it == id_to_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<RawEvent> parse_yoochoose(const std::string& path, ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<RawEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (report) ++report->rows;
    auto fields = split(line, ',');
    if (fields.size() != 4) {
      warn(report, line_no, "expected 4 fields, got " + std::to_string(fields.size()));
      continue;
    }
    auto ts = parse_iso8601_ms(fields[1]);
    if (!ts || fields[0].empty() || fields[2].empty()) {
      warn(report, line_no, "bad timestamp or empty field");
      continue;
    }
    events.push_back(RawEvent{fields[0], *ts, fields[2]});
    if (report) ++report->events;
  }
  if (in.bad()) throw IoError("read failed: " + path);
  return events;
}

std::vector<RawEvent> parse_diginetica(const std::string& path, ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<RawEvent> events;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("sessionId", 0) == 0) continue;  // header
    }
    if (report) ++report->rows;
    auto fields = split(line, ';');
    if (fields.size() != 5) {
      warn(report, line_no, "expected 5 fields, got " + std::to_string(fields.size()));
      continue;
    }
    const std::string& date = fields[4];
    auto day_ms = parse_iso8601_ms(date + "T00:00:00");
    if (!day_ms || !is_integer(fields[3]) || fields[0].empty() || fields[2].empty()) {
      warn(report, line_no, "bad timeframe or eventdate");
      continue;
    }
    const std::int64_t timeframe = std::stoll(fields[3]);
    events.push_back(RawEvent{fields[0], *day_ms + timeframe, fields[2]});
    if (report) ++report->events;
  }
  if (in.bad()) throw IoError("read failed: " + path);
  // Within-session order is by timeframe, not file order.
  std::stable_sort(events.begin(), events.end(), [](const RawEvent& a, const RawEvent& b) {
    return a.session_id != b.session_id ? a.session_id < b.session_id
                                        : a.timestamp_ms < b.timestamp_ms;
  });
  return events;
}

std::vector<RawEvent> parse_generic_csv(const std::string& path, ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::vector<RawEvent> events;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing header in " + path);
  strip_cr(line);
  if (line != "session_id,timestamp,item_id")
    throw FormatError("expected header session_id,timestamp,item_id in " + path);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (report) ++report->rows;
    auto fields = split(line, ',');
    if (fields.size() != 3) {
      warn(report, line_no, "expected 3 fields, got " + std::to_string(fields.size()));
      continue;
    }
    std::optional<std::int64_t> ts;
    if (is_integer(fields[1])) {
      ts = std::stoll(fields[1]);
    } else {
      ts = parse_iso8601_ms(fields[1]);
    }
    if (!ts || fields[0].empty() || fields[2].empty()) {
      warn(report, line_no, "bad timestamp or empty field");
      continue;
    }
    events.push_back(RawEvent{fields[0], *ts, fields[2]});
    if (report) ++report->events;
  }
  if (in.bad()) throw IoError("read failed: " + path);
  return events;
}

std::uint64_t preprocess_config_hash(const PreprocessConfig& cfg) {
  std::ostringstream ss;
  ss << "recipe=" << cfg.recipe << ";min_item_support=" << cfg.min_item_support
     << ";test_window_days=" << cfg.test_window_days
     << ";train_keep_fraction=" << cfg.train_keep_fraction << ";max_len=" << cfg.max_len;
  return fnv1a64(ss.str());
}

void ProcessedCorpus::rebuild_examples() {
  train.clear();
  test.clear();
  auto augment = [this](const std::vector<std::vector<ItemIndex>>& sessions,
                        std::vector<SessionExample>& out) {
    for (const auto& s : sessions) {
      for (std::size_t i = 1; i < s.size(); ++i) {
        SessionExample ex;
        std::size_t begin = 0;
        if (meta.max_len > 0 && i > meta.max_len) begin = i - meta.max_len;
        ex.history.assign(s.begin() + static_cast<std::ptrdiff_t>(begin),
                          s.begin() + static_cast<std::ptrdiff_t>(i));
        ex.target = s[i];
        out.push_back(std::move(ex));
      }
    }
  };
  augment(train_sessions, train);
  augment(test_sessions, test);
}

ProcessedCorpus preprocess(const std::vector<RawEvent>& events, const PreprocessConfig& cfg) {
  if (events.empty()) throw EmptyCorpusError("no events to preprocess");

  auto sessions = group_sessions(events);

  auto drop_short = [](std::vector<GroupedSession>& ss) {
    std::erase_if(ss, [](const GroupedSession& s) { return s.items.size() < 2; });
  };
  drop_short(sessions);

  // Item support is the occurrence count over surviving sessions.
  std::unordered_map<std::string, std::uint32_t> support;
  for (const auto& s : sessions)
    for (const auto& item : s.items) ++support[item];
  for (auto& s : sessions) {
    std::erase_if(s.items, [&](const std::string& item) {
      return support.at(item) < cfg.min_item_support;
    });
  }
  drop_short(sessions);
  if (sessions.empty()) throw EmptyCorpusError("all sessions filtered out");

  // Split by session start day: the final test_window_days go to test.
  std::int64_t max_start = sessions.front().start_ms;
  for (const auto& s : sessions) max_start = std::max(max_start, s.start_ms);
  const std::int64_t last_day = max_start / kMsPerDay;
  const std::int64_t cutoff_day = last_day - static_cast<std::int64_t>(cfg.test_window_days);

  std::vector<const GroupedSession*> train_raw, test_raw;
  for (const auto& s : sessions) {
    if (s.start_ms / kMsPerDay > cutoff_day)
      test_raw.push_back(&s);
    else
      train_raw.push_back(&s);
  }

  // YooChoose 1/4: keep only the most recent fraction of training sessions.
  if (cfg.train_keep_fraction < 1.0) {
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(static_cast<double>(train_raw.size()) * cfg.train_keep_fraction));
    if (keep < train_raw.size())
      train_raw.erase(train_raw.begin(),
                      train_raw.end() - static_cast<std::ptrdiff_t>(keep));
  }
  if (train_raw.empty()) throw EmptyCorpusError("no training sessions after split");

  ProcessedCorpus corpus;
  corpus.meta.dataset = cfg.dataset;
  corpus.meta.recipe = cfg.recipe;
  corpus.meta.config_hash = preprocess_config_hash(cfg);
  corpus.meta.max_len = cfg.max_len;

  for (const auto* s : train_raw) {
    std::vector<ItemIndex> idx;
    idx.reserve(s->items.size());
    for (const auto& item : s->items) idx.push_back(corpus.vocab.add(item));
    corpus.train_sessions.push_back(std::move(idx));
  }

  // Test events with items unseen in training are dropped.
  for (const auto* s : test_raw) {
    std::vector<ItemIndex> idx;
    idx.reserve(s->items.size());
    for (const auto& item : s->items) {
      if (auto found = corpus.vocab.find(item)) idx.push_back(*found);
    }
    if (idx.size() >= 2) corpus.test_sessions.push_back(std::move(idx));
  }

  corpus.rebuild_examples();
  if (corpus.train.empty()) throw EmptyCorpusError("no training examples after filtering");
  return corpus;
}

namespace {

void serialize_payload(const ProcessedCorpus& corpus, ByteWriter& w) {
  w.str(corpus.meta.dataset);
  w.str(corpus.meta.recipe);
  w.u64(corpus.meta.config_hash);
  w.u32(corpus.meta.max_len);
  w.varint(corpus.vocab.size());
  for (const auto& id : corpus.vocab.raw_ids()) w.str(id);
  auto write_sessions = [&w](const std::vector<std::vector<ItemIndex>>& sessions) {
    w.varint(sessions.size());
    for (const auto& s : sessions) {
      w.varint(s.size());
      for (ItemIndex idx : s) w.varint(idx);
    }
  };
  write_sessions(corpus.train_sessions);
  write_sessions(corpus.test_sessions);
}

}  // namespace

std::uint64_t ProcessedCorpus::content_hash() const {
  ByteWriter w;
  serialize_payload(*this, w);
  return fnv1a64(w.bytes().data(), w.bytes().size());
}

void write_corpus(const ProcessedCorpus& corpus, const std::string& path) {
  ByteWriter payload;
  serialize_payload(corpus, payload);

  ByteWriter w;
  w.raw(kCorpusMagic, 4);
  w.u32(kCorpusVersion);
  w.u64(fnv1a64(payload.bytes().data(), payload.bytes().size()));
  w.raw(payload.bytes().data(), payload.bytes().size());
  write_file_bytes(path, w.bytes());

  nlohmann::json sidecar;
  sidecar["dataset"] = corpus.meta.dataset;
  sidecar["recipe"] = corpus.meta.recipe;
  sidecar["items"] = corpus.vocab.size();
  sidecar["train_sessions"] = corpus.train_sessions.size();
  sidecar["test_sessions"] = corpus.test_sessions.size();
  sidecar["train_examples"] = corpus.train.size();
  sidecar["test_examples"] = corpus.test.size();
  write_text_file(path + ".json", sidecar.dump(2) + "\n");
}

ProcessedCorpus read_corpus(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes);
  char magic[4];
  if (r.remaining() < 4) throw FormatError("corpus file too short: " + path);
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kCorpusMagic, 4) != 0)
    throw FormatError("not a corpus file (bad magic): " + path);
  const std::uint32_t version = r.u32();
  if (version != kCorpusVersion)
    throw FormatError("unsupported corpus version " + std::to_string(version));
  const std::uint64_t stored_hash = r.u64();
  const std::uint64_t actual_hash = fnv1a64(r.cursor(), r.remaining());
  if (stored_hash != actual_hash) throw FormatError("corpus payload hash mismatch: " + path);

  ProcessedCorpus corpus;
  corpus.meta.dataset = r.str();
  corpus.meta.recipe = r.str();
  corpus.meta.config_hash = r.u64();
  corpus.meta.max_len = r.u32();
  const std::uint64_t vocab_size = r.varint();
  for (std::uint64_t i = 0; i < vocab_size; ++i) corpus.vocab.add(r.str());
  auto read_sessions = [&r, vocab_size](std::vector<std::vector<ItemIndex>>& sessions) {
    const std::uint64_t count = r.varint();
    sessions.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t len = r.varint();
      std::vector<ItemIndex> s;
      s.reserve(len);
      for (std::uint64_t j = 0; j < len; ++j) {
        const std::uint64_t idx = r.varint();
        if (idx >= vocab_size) throw FormatError("item index out of range in corpus");
        s.push_back(static_cast<ItemIndex>(idx));
      }
      sessions.push_back(std::move(s));
    }
  };
  read_sessions(corpus.train_sessions);
  read_sessions(corpus.test_sessions);
  corpus.rebuild_examples();
  return corpus;
}

}  // namespace crerank
