#include "doctest.h"
#include "pave/config.hpp"

using namespace pave;

TEST_CASE("run config") {
    SUBCASE("defaults carry the published loss weights") {
        RunConfig c;
        CHECK(c.train.l_cls == 0.5);
        CHECK(c.train.l_rle == 1.0);
        CHECK(c.model.span == 1);
        CHECK(c.model.queries == 20);
    }
    SUBCASE("parse ignores comments and blank lines") {
        RunConfig c = RunConfig::parse_text("# a comment\n\nvariant = no-stjd\n  steps=123  \nlr = 5e-4\n");
        CHECK(c.model.variant == Variant::no_stjd);
        CHECK(c.train.steps == 123);
        CHECK(c.train.lr == 5e-4);
    }
    SUBCASE("unknown keys are collected into one error") {
        try {
            RunConfig::parse_text("steps = 10\nbogus_key = 1\nanother = 2\n");
            FAIL("expected a config error");
        } catch (const std::invalid_argument& e) {
            const std::string msg = e.what();
            CHECK(msg.find("bogus_key") != std::string::npos);
            CHECK(msg.find("another") != std::string::npos);
        }
    }
    SUBCASE("lines without '=' report their line number") {
        try {
            RunConfig::parse_text("steps = 10\nnot a key value pair\n");
            FAIL("expected a config error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("2") != std::string::npos);
        }
    }
    SUBCASE("echo round-trips every field") {
        RunConfig c;
        c.model.variant = Variant::random_refs;
        c.model.embed_dim = 48;
        c.model.queries = 7;
        c.model.span = 2;
        c.model.height = 32;
        c.model.width = 64;
        c.train.steps = 77;
        c.train.batch = 3;
        c.train.lr = 1.25e-4;
        c.train.difficulty = Difficulty::hard;
        c.train.blur = 0.4;
        c.train.occlude = 0.6;
        c.train.target_map = 0.9;
        c.train.out_dir = "/tmp/run_x";
        RunConfig back = RunConfig::parse_text(c.echo());
        CHECK(back.echo() == c.echo());
        CHECK(back.model.variant == Variant::random_refs);
        CHECK(back.model.embed_dim == 48);
        CHECK(back.model.queries == 7);
        CHECK(back.train.lr == 1.25e-4);
        CHECK(back.train.difficulty == Difficulty::hard);
        CHECK(back.train.out_dir == "/tmp/run_x");
    }
    SUBCASE("variant names round-trip") {
        for (Variant v : {Variant::pave, Variant::baseline_ste, Variant::no_stjd, Variant::random_refs,
                          Variant::image_only}) {
            CHECK(parse_variant(variant_name(v)) == v);
        }
        CHECK_THROWS_AS(parse_variant("not-a-variant"), std::invalid_argument);
    }
}
