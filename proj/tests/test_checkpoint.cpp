#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "splitkit/checkpoint.hpp"
#include "splitkit/digest.hpp"
#include "splitkit/errors.hpp"
#include "test_util.hpp"

using namespace splitkit;
using namespace splitkit::testutil;

namespace {

ParamStore sample_store() {
    ParamStore store;
    store.version = 3;
    store.tensors["layer.weight"] = random_tensor({4, 3}, 77);
    store.tensors["layer.bias"] = random_tensor({4}, 78);
    Tensor bytes({2, 2}, Dtype::Uint8);
    bytes.values() = {0.0, 17.0, 200.0, 255.0};
    store.tensors["image.raw"] = bytes;
    return store;
}

}  // namespace

TEST_CASE("checkpoint: serialize/deserialize round-trip is bit-exact") {
    ParamStore store = sample_store();
    auto blob = serialize_params(store);
    ParamStore back = deserialize_params(blob.data(), blob.size());
    CHECK(back.version == store.version);
    REQUIRE(back.tensors.size() == store.tensors.size());
    for (const auto& [name, tensor] : store.tensors) {
        REQUIRE(back.contains(name));
        CHECK(back.at(name) == tensor);
    }
}

TEST_CASE("checkpoint: container starts with magic and version") {
    auto blob = serialize_params(sample_store());
    REQUIRE(blob.size() > 16);
    CHECK(blob[0] == 'S');
    CHECK(blob[1] == 'P');
    CHECK(blob[2] == 'L');
    CHECK(blob[3] == 'K');
    std::uint32_t version = 0;
    std::memcpy(&version, blob.data() + 4, 4);
    CHECK(version == 1);
}

TEST_CASE("checkpoint: file save/load round-trip") {
    TempDir dir;
    ParamStore store = sample_store();
    save_checkpoint(store, dir.file("model.splk"));
    ParamStore back = load_checkpoint(dir.file("model.splk"));
    for (const auto& [name, tensor] : store.tensors) {
        CHECK(back.at(name) == tensor);
    }
    CHECK(back.version == store.version);
}

TEST_CASE("checkpoint: corrupted magic rejected") {
    auto blob = serialize_params(sample_store());
    blob[0] = 'X';
    CHECK_THROWS_AS(deserialize_params(blob.data(), blob.size()), FormatError);
}

TEST_CASE("checkpoint: unsupported version rejected") {
    auto blob = serialize_params(sample_store());
    blob[4] = 9;
    CHECK_THROWS_AS(deserialize_params(blob.data(), blob.size()), FormatError);
}

TEST_CASE("checkpoint: truncated payload rejected") {
    auto blob = serialize_params(sample_store());
    blob.resize(blob.size() - 8);
    CHECK_THROWS_AS(deserialize_params(blob.data(), blob.size()), FormatError);
}

TEST_CASE("checkpoint: reserved meta name rejected") {
    ParamStore store;
    store.tensors["__meta__"] = random_tensor({2}, 5);
    CHECK_THROWS_AS(serialize_params(store), InvalidArgument);
}

TEST_CASE("checkpoint: digest is stable and content-sensitive") {
    ParamStore store = sample_store();
    auto d1 = params_digest(store);
    auto d2 = params_digest(store);
    CHECK(d1 == d2);
    CHECK(d1.size() == 64);

    store.tensors["layer.bias"][0] += 1.0;
    CHECK(params_digest(store) != d1);
}

TEST_CASE("checkpoint: missing tensor lookup throws") {
    ParamStore store = sample_store();
    CHECK_THROWS_AS(store.at("absent.weight"), InvalidArgument);
    CHECK_FALSE(store.contains("absent.weight"));
}

TEST_CASE("sha256: known vector") {
    // sha256("abc")
    const std::string abc = "abc";
    CHECK(sha256_hex(abc.data(), abc.size()) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
