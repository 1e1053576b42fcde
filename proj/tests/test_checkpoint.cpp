#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crerank/checkpoint.hpp"
#include "crerank/serial.hpp"
#include "testutil.hpp"

using namespace crerank;
using crerank::testing::TempDir;

namespace {

SimilarityTable sample_table() {
  CooccurrenceCounts counts;
  counts.num_items = 5;
  counts.item_support = {4, 3, 2, 2, 1};
  counts.pair_support[CooccurrenceCounts::pair_key(0, 1)] = 3;
  counts.pair_support[CooccurrenceCounts::pair_key(0, 2)] = 1;
  counts.pair_support[CooccurrenceCounts::pair_key(2, 3)] = 2;
  return asym_cosine(counts, 0.3, 4);
}

}  // namespace

TEST_CASE("cf checkpoint round-trips the similarity table") {
  auto table = sample_table();
  auto cp = checkpoint_from_table(table);
  cp.meta["corpus_hash"] = "123";

  TempDir dir;
  auto path = dir.file("cf.ckpt");
  const std::uint64_t written_hash = write_checkpoint(cp, path);

  auto loaded = read_checkpoint(path);
  CHECK(loaded.kind == "cf");
  CHECK(loaded.stored_hash == written_hash);
  CHECK(loaded.meta_or("corpus_hash", "") == "123");

  auto table2 = table_from_checkpoint(loaded);
  CHECK(table2.alpha == table.alpha);
  CHECK(table2.width == table.width);
  CHECK(table2.item_support == table.item_support);
  CHECK(table2.popularity == table.popularity);
  REQUIRE(table2.neighbors.size() == table.neighbors.size());
  for (std::size_t i = 0; i < table.neighbors.size(); ++i) {
    REQUIRE(table2.neighbors[i].size() == table.neighbors[i].size());
    for (std::size_t j = 0; j < table.neighbors[i].size(); ++j) {
      CHECK(table2.neighbors[i][j].item == table.neighbors[i][j].item);
      CHECK(table2.neighbors[i][j].score == table.neighbors[i][j].score);
    }
  }

  // Writing again yields identical bytes.
  auto path2 = dir.file("cf2.ckpt");
  write_checkpoint(loaded, path2);
  CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("stamp checkpoint round-trips all tensors bitwise") {
  Rng rng(RngSeed{5});
  auto params = StampParams<float>::init(6, 11, rng);
  auto cp = checkpoint_from_stamp(params, EncoderKind::stamp, true);

  TempDir dir;
  auto path = dir.file("g.ckpt");
  write_checkpoint(cp, path);
  auto loaded = read_checkpoint(path);
  CHECK(loaded.kind == "stamp");
  CHECK(loaded.meta_or("attention_normalized", "") == "true");

  auto params2 = stamp_from_checkpoint(loaded);
  bool equal = true;
  StampParams<float>::visit([&](const char*, const auto& a, const auto& b) {
    if (a != b) equal = false;
  }, params, params2);
  CHECK(equal);
}

TEST_CASE("reranker checkpoint keeps structure flags") {
  Rng rng(RngSeed{6});
  auto params = RerankerParams<float>::init(5, 3, 7, 9, 2, false, true, rng);
  auto cp = checkpoint_from_reranker(params);

  TempDir dir;
  auto path = dir.file("r.ckpt");
  write_checkpoint(cp, path);
  auto loaded = read_checkpoint(path);
  auto params2 = reranker_from_checkpoint(loaded);
  CHECK(params2.k == 7);
  CHECK(params2.cre_stride == 2);
  CHECK(params2.cre_enabled == false);
  CHECK(params2.normalized_attention == true);
  CHECK(params2.rank_embed.rows() == 4);  // ceil(7/2)
  bool equal = true;
  RerankerParams<float>::visit([&](const char*, const auto& a, const auto& b) {
    if (a != b) equal = false;
  }, params, params2);
  CHECK(equal);
}

TEST_CASE("load rejects shape mismatches naming the tensor") {
  Rng rng(RngSeed{7});
  auto params = StampParams<float>::init(4, 6, rng);
  auto cp = checkpoint_from_stamp(params, EncoderKind::stamp, false);
  for (auto& [name, t] : cp.tensors)
    if (name == std::string("attn_gate")) t = MatF::Zero(9, 1);

  TempDir dir;
  auto path = dir.file("bad.ckpt");
  write_checkpoint(cp, path);
  auto loaded = read_checkpoint(path);
  try {
    stamp_from_checkpoint(loaded);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("attn_gate") != std::string::npos);
  }
}

TEST_CASE("load rejects missing tensors and wrong kinds") {
  Rng rng(RngSeed{8});
  auto params = StampParams<float>::init(4, 6, rng);
  auto cp = checkpoint_from_stamp(params, EncoderKind::stmo, false);
  std::erase_if(cp.tensors, [](const auto& kv) { return kv.first == "ffn_last"; });

  TempDir dir;
  auto path = dir.file("missing.ckpt");
  write_checkpoint(cp, path);
  CHECK_THROWS_AS(stamp_from_checkpoint(read_checkpoint(path)), FormatError);
  CHECK_THROWS_AS(table_from_checkpoint(read_checkpoint(path)), FormatError);
}

TEST_CASE("corrupt checkpoint files are format errors") {
  TempDir dir;
  auto bad = dir.write("x.ckpt", "NOPE....garbage beyond the header.....");
  CHECK_THROWS_AS(read_checkpoint(bad), FormatError);

  // Flip one payload byte: hash check must catch it.
  Rng rng(RngSeed{9});
  auto params = StampParams<float>::init(3, 4, rng);
  auto cp = checkpoint_from_stamp(params, EncoderKind::stamp, false);
  auto path = dir.file("ok.ckpt");
  write_checkpoint(cp, path);
  auto bytes = read_file_bytes(path);
  bytes[bytes.size() - 3] = static_cast<char>(bytes[bytes.size() - 3] ^ 0x40);
  auto tampered = dir.write("tampered.ckpt", bytes);
  CHECK_THROWS_AS(read_checkpoint(tampered), FormatError);
}

TEST_CASE("candidate cache round trip") {
  CandidateCache cache;
  cache.generator_hash = 0xabcdef;
  cache.corpus_hash = 0x123456;
  cache.k = 3;
  cache.lists = {{1, 2, 3}, {4, 5}, {}, {0, 2, 4}};

  TempDir dir;
  auto path = dir.file("cands.bin");
  write_candidate_cache(cache, path);
  auto loaded = read_candidate_cache(path);
  CHECK(loaded.generator_hash == cache.generator_hash);
  CHECK(loaded.corpus_hash == cache.corpus_hash);
  CHECK(loaded.k == cache.k);
  CHECK(loaded.lists == cache.lists);

  auto bad = dir.write("bad.bin", "CRCCxxxxxxxxxxxxxxxx");
  CHECK_THROWS_AS(read_candidate_cache(bad), FormatError);
}
