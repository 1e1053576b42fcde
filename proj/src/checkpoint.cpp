#include "crerank/checkpoint.hpp"

#include <algorithm>
#include <cstring>

#include "crerank/serial.hpp"

namespace crerank {

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'R', 'C', 'K'};
constexpr char kCacheMagic[4] = {'C', 'R', 'C', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_header(ByteWriter& w, const char magic[4], const std::string& payload) {
  w.raw(magic, 4);
  w.u32(kVersion);
  w.u64(fnv1a64(payload.data(), payload.size()));
  w.raw(payload.data(), payload.size());
}

ByteReader open_container(const std::string& bytes, const char magic[4],
                          const std::string& what, const std::string& path,
                          std::uint64_t* hash_out) {
  ByteReader r(bytes);
  if (r.remaining() < 16) throw FormatError(what + " file too short: " + path);
  char m[4];
  for (char& c : m) c = static_cast<char>(r.u8());
  if (std::memcmp(m, magic, 4) != 0)
    throw FormatError("not a " + what + " file (bad magic): " + path);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError("unsupported " + what + " version " + std::to_string(version));
  const std::uint64_t stored = r.u64();
  if (stored != fnv1a64(r.cursor(), r.remaining()))
    throw FormatError(what + " payload hash mismatch: " + path);
  if (hash_out) *hash_out = stored;
  return r;
}

void write_table(ByteWriter& w, const SimilarityTable& table) {
  w.f64(table.alpha);
  w.u32(table.width);
  w.varint(table.item_support.size());
  for (std::uint32_t n : table.item_support) w.varint(n);
  w.varint(table.neighbors.size());
  for (const auto& list : table.neighbors) {
    w.varint(list.size());
    for (const auto& si : list) {
      w.varint(si.item);
      w.f64(si.score);
    }
  }
}

SimilarityTable read_table(ByteReader& r) {
  SimilarityTable table;
  table.alpha = r.f64();
  table.width = r.u32();
  const std::uint64_t items = r.varint();
  table.item_support.reserve(items);
  for (std::uint64_t i = 0; i < items; ++i)
    table.item_support.push_back(static_cast<std::uint32_t>(r.varint()));
  const std::uint64_t anchors = r.varint();
  if (anchors != items) throw FormatError("similarity table anchor count mismatch");
  table.neighbors.resize(anchors);
  for (auto& list : table.neighbors) {
    const std::uint64_t len = r.varint();
    list.reserve(len);
    for (std::uint64_t j = 0; j < len; ++j) {
      ScoredItem si;
      si.item = static_cast<ItemIndex>(r.varint());
      si.score = r.f64();
      if (si.item >= items) throw FormatError("similarity table item out of range");
      list.push_back(si);
    }
  }
  // Popularity is derived, not stored: support desc, index asc.
  table.popularity.resize(items);
  for (ItemIndex i = 0; i < items; ++i) table.popularity[i] = i;
  std::sort(table.popularity.begin(), table.popularity.end(), [&](ItemIndex a, ItemIndex b) {
    return table.item_support[a] != table.item_support[b]
               ? table.item_support[a] > table.item_support[b]
               : a < b;
  });
  return table;
}

}  // namespace

const MatF* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
  auto it = meta.find(key);
  return it == meta.end() ? fallback : it->second;
}

std::uint64_t write_checkpoint(Checkpoint& cp, const std::string& path) {
  ByteWriter p;
  p.str(cp.kind);
  p.varint(cp.meta.size());
  for (const auto& [k, v] : cp.meta) {
    p.str(k);
    p.str(v);
  }
  p.varint(cp.tensors.size());
  for (const auto& [name, t] : cp.tensors) {
    p.str(name);
    p.u32(static_cast<std::uint32_t>(t.rows()));
    p.u32(static_cast<std::uint32_t>(t.cols()));
    for (Index r = 0; r < t.rows(); ++r)
      for (Index c = 0; c < t.cols(); ++c) p.f32(t(r, c));
  }
  p.u8(cp.table.has_value() ? 1 : 0);
  if (cp.table) write_table(p, *cp.table);

  ByteWriter w;
  write_header(w, kCheckpointMagic, p.bytes());
  write_file_bytes(path, w.bytes());
  cp.stored_hash = fnv1a64(p.bytes().data(), p.bytes().size());
  return cp.stored_hash;
}

Checkpoint read_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  Checkpoint cp;
  ByteReader r = open_container(bytes, kCheckpointMagic, "checkpoint", path, &cp.stored_hash);
  cp.kind = r.str();
  const std::uint64_t n_meta = r.varint();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    cp.meta[k] = r.str();
  }
  const std::uint64_t n_tensors = r.varint();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    MatF t(rows, cols);
    for (Index rr = 0; rr < t.rows(); ++rr)
      for (Index cc = 0; cc < t.cols(); ++cc) t(rr, cc) = r.f32();
    cp.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.u8()) cp.table = read_table(r);
  return cp;
}

namespace {

// Copies visited tensors out of / back into a parameter struct; loads
// fail with the offending tensor named.
template <class P>
void tensors_from_params(const P& params, Checkpoint& cp) {
  P::visit([&cp](const char* name, const auto& t) {
    cp.tensors.emplace_back(name, t.template cast<float>());
  }, params);
}

template <class P>
void params_from_tensors(const Checkpoint& cp, P& params) {
  P::visit([&cp](const char* name, auto& t) {
    const MatF* stored = cp.find_tensor(name);
    if (!stored) throw FormatError("checkpoint is missing tensor " + std::string(name));
    if (stored->rows() != t.rows() || stored->cols() != t.cols())
      throw FormatError("checkpoint tensor " + std::string(name) + " has shape " +
                        std::to_string(stored->rows()) + "x" + std::to_string(stored->cols()) +
                        ", expected " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
    t = *stored;
  }, params);
}

Index meta_index(const Checkpoint& cp, const std::string& key) {
  const std::string v = cp.meta_or(key, "");
  if (v.empty()) throw FormatError("checkpoint is missing meta key " + key);
  return static_cast<Index>(std::stoll(v));
}

}  // namespace

Checkpoint checkpoint_from_table(const SimilarityTable& table) {
  Checkpoint cp;
  cp.kind = "cf";
  cp.table = table;
  return cp;
}

SimilarityTable table_from_checkpoint(const Checkpoint& cp) {
  if (cp.kind != "cf") throw FormatError("checkpoint kind is " + cp.kind + ", expected cf");
  if (!cp.table) throw FormatError("cf checkpoint has no similarity table");
  return *cp.table;
}

Checkpoint checkpoint_from_stamp(const StampParams<float>& params, EncoderKind kind,
                                 bool normalized_attention) {
  Checkpoint cp;
  cp.kind = encoder_kind_name(kind);
  cp.meta["d"] = std::to_string(params.dim());
  cp.meta["items"] = std::to_string(params.items());
  cp.meta["attention_normalized"] = normalized_attention ? "true" : "false";
  tensors_from_params(params, cp);
  return cp;
}

StampParams<float> stamp_from_checkpoint(const Checkpoint& cp) {
  if (cp.kind != "stamp" && cp.kind != "stmo")
    throw FormatError("checkpoint kind is " + cp.kind + ", expected stamp or stmo");
  const Index d = meta_index(cp, "d");
  const Index items = meta_index(cp, "items");
  Rng dummy(RngSeed{0});
  auto params = StampParams<float>::init(d, items, dummy);
  params_from_tensors(cp, params);
  return params;
}

Checkpoint checkpoint_from_reranker(const RerankerParams<float>& params) {
  Checkpoint cp;
  cp.kind = "reranker";
  cp.meta["d"] = std::to_string(params.dim());
  cp.meta["d_cre"] = std::to_string(params.cre_dim());
  cp.meta["items"] = std::to_string(params.items());
  cp.meta["k"] = std::to_string(params.k);
  cp.meta["cre_stride"] = std::to_string(params.cre_stride);
  cp.meta["cre_enabled"] = params.cre_enabled ? "true" : "false";
  cp.meta["attention_normalized"] = params.normalized_attention ? "true" : "false";
  tensors_from_params(params, cp);
  return cp;
}

RerankerParams<float> reranker_from_checkpoint(const Checkpoint& cp) {
  if (cp.kind != "reranker")
    throw FormatError("checkpoint kind is " + cp.kind + ", expected reranker");
  const Index d = meta_index(cp, "d");
  const Index d_cre = meta_index(cp, "d_cre");
  const Index items = meta_index(cp, "items");
  const auto k = static_cast<std::uint32_t>(meta_index(cp, "k"));
  const auto stride = static_cast<std::uint32_t>(meta_index(cp, "cre_stride"));
  Rng dummy(RngSeed{0});
  auto params = RerankerParams<float>::init(
      d, d_cre, k, items, stride, cp.meta_or("cre_enabled", "true") == "true",
      cp.meta_or("attention_normalized", "false") == "true", dummy);
  params_from_tensors(cp, params);
  return params;
}

std::uint64_t write_candidate_cache(const CandidateCache& cache, const std::string& path) {
  ByteWriter p;
  p.u64(cache.generator_hash);
  p.u64(cache.corpus_hash);
  p.u32(cache.k);
  p.varint(cache.lists.size());
  for (std::size_t i = 0; i < cache.lists.size(); ++i) {
    p.varint(i);  // example id
    p.varint(cache.lists[i].size());
    for (ItemIndex item : cache.lists[i]) p.varint(item);
  }
  ByteWriter w;
  write_header(w, kCacheMagic, p.bytes());
  write_file_bytes(path, w.bytes());
  return fnv1a64(p.bytes().data(), p.bytes().size());
}

CandidateCache read_candidate_cache(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r = open_container(bytes, kCacheMagic, "candidate cache", path, nullptr);
  CandidateCache cache;
  cache.generator_hash = r.u64();
  cache.corpus_hash = r.u64();
  cache.k = r.u32();
  const std::uint64_t count = r.varint();
  cache.lists.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t id = r.varint();
    if (id != i) throw FormatError("candidate cache ids out of order");
    const std::uint64_t len = r.varint();
    auto& list = cache.lists[i];
    list.reserve(len);
    for (std::uint64_t j = 0; j < len; ++j)
      list.push_back(static_cast<ItemIndex>(r.varint()));
  }
  return cache;
}

}  // namespace crerank
