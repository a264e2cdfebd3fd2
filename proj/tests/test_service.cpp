// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <thread>

#include "doctest_torch.hpp"
#include "httplib.h"
#include "json.hpp"
#include "paramstyle/hash.hpp"
#include "paramstyle/image.hpp"
#include "paramstyle/scene.hpp"
#include "paramstyle/service.hpp"
#include "test_support.hpp"

using namespace paramstyle;
using namespace paramstyle::testing;
using nlohmann::json;

namespace {

StyleModel micro_model(std::uint64_t seed = 61) {
  auto model = make_model(micro_config(8), two_attributes(), seed);
  perturb_zero_init(model, seed + 1, 0.2);
  model->eval();
  return model;
}

// One service behind a real HTTP server on an ephemeral port.
struct Harness {
  EditService service;
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit Harness(std::size_t capacity = EditService::kQueueCapacity) : service(capacity) {
    service.add_model("toy", micro_model());
    service.install_routes(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~Harness() {
    server.stop();
    thread.join();
    service.shutdown();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
  std::pair<int, json> post(const std::string& path, const json& body) const {
    auto res = client().Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return {res->status, json::parse(res->body)};
  }
  std::pair<int, json> get(const std::string& path) const {
    auto res = client().Get(path);
    REQUIRE(res);
    return {res->status, json::parse(res->body)};
  }
  // Polls GET /api/jobs/{id} until the job leaves queued/running.
  json finish(const json& job) const {
    const std::string id = job["id"];
    for (int i = 0; i < 6000; ++i) {
      const auto [status, j] = get("/api/jobs/" + id);
      REQUIRE(status == 200);
      if (j["state"] == "done" || j["state"] == "failed") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    FAIL("job did not finish: " << id);
    return {};
  }
  json run(const std::string& path, const json& body) const {
    const auto [status, job] = post(path, body);
    REQUIRE_MESSAGE(status == 202, job.dump());
    CHECK(job["state"] == "queued");
    const auto done = finish(job);
    REQUIRE_MESSAGE(done["state"] == "done", done.dump());
    return done;
  }
};

ImageBuffer decode_b64_png(const json& field) { return decode_png(base64_decode(field.get<std::string>())); }

}  // namespace

TEST_CASE("service: health and model registry") {
  Harness h;
  const auto [hs, health] = h.get("/api/health");
  CHECK(hs == 200);
  CHECK(health["status"] == "ok");
  CHECK(health["capacity"] == 64);
  const auto [ms, models] = h.get("/api/models");
  CHECK(ms == 200);
  REQUIRE(models.size() == 1);
  CHECK(models[0]["name"] == "toy");
  CHECK(models[0]["attributes"] == json(two_attributes()));
  CHECK(models[0]["resolution"] == 8);
  CHECK(models[0]["fingerprint"].get<std::string>().size() == 64);
}

TEST_CASE("service: generate is reproducible and edit at lambda = 0 matches it") {
  Harness h;
  const json gen{{"model", "toy"}, {"prompt_id", 3}, {"seed", 17}, {"steps", 8}, {"w1", 5.0}};
  const auto a = h.run("/api/generate", gen);
  const auto b = h.run("/api/generate", gen);
  CHECK(a["result"]["png"] == b["result"]["png"]);
  CHECK(a["result"]["width"] == 8);
  CHECK(a["runtime_seconds"].get<double>() >= 0.0);
  const auto img = decode_b64_png(a["result"]["png"]);
  CHECK(img.width == 8);

  const json edit0{{"model", "toy"},
                   {"base", {{"seed", 17}, {"prompt_id", 3}}},
                   {"steps", 8},
                   {"w1", 5.0},
                   {"lambda", {{"blackpoint", 0.0}, {"contourWidth", 0.0}}}};
  const auto e0 = h.run("/api/edit", edit0);
  CHECK(e0["result"]["png"] == a["result"]["png"]);
  CHECK(e0["result"]["distance_to_base"] == 0.0);

  json edit1 = edit0;
  edit1["lambda"]["contourWidth"] = 1.0;
  const auto e1 = h.run("/api/edit", edit1);
  const auto e1b = h.run("/api/edit", edit1);
  CHECK(e1["result"]["png"] == e1b["result"]["png"]);
  CHECK(e1["result"]["lambda"]["contourWidth"] == 1.0);
  CHECK(e1["result"].contains("w2"));
  CHECK(e1["result"].contains("act_t"));
}

TEST_CASE("service: invert, then edit the inversion at lambda = 0") {
  Harness h;
  const auto scene = quantize8(generate_scene(4, 5, 8));
  const json inv{{"model", "toy"},
                 {"image", base64_encode(encode_png(scene))},
                 {"prompt_id", 4},
                 {"iterations", 2},
                 {"steps", 8}};
  const auto done = h.run("/api/invert", inv);
  const auto& r = done["result"];
  CHECK(r["cached"] == false);
  CHECK(r.contains("psnr"));
  const std::string id = r["inversion_id"];
  const auto again = h.run("/api/invert", inv);
  CHECK(again["result"]["cached"] == true);
  CHECK(again["result"]["inversion_id"] == id);

  const json edit0{{"model", "toy"}, {"base", {{"inversion_id", id}}}, {"lambda", json::object()}};
  const auto e0 = h.run("/api/edit", edit0);
  CHECK(e0["result"]["png"] == r["reconstruction"]);

  const json sweep{{"model", "toy"},
                   {"base", {{"inversion_id", id}}},
                   {"attribute", "blackpoint"},
                   {"grid", {0.0, 0.5, 1.0}}};
  const auto s = h.run("/api/sweep", sweep);
  REQUIRE(s["result"]["images"].size() == 3);
  CHECK(s["result"]["images"][0]["png"] == r["reconstruction"]);
  CHECK(s["result"]["images"][0]["distance"] == 0.0);
  CHECK(decode_b64_png(s["result"]["strip"]).width == 3 * 8);
}

TEST_CASE("service: sweep returns one image per grid point and a CSV curve") {
  Harness h;
  const json sweep{{"model", "toy"}, {"base", {{"seed", 3}, {"prompt_id", 1}}}, {"steps", 6},
                   {"attribute", "contourWidth"}};
  const auto s = h.run("/api/sweep", sweep);
  CHECK(s["result"]["grid"].size() == 11);
  CHECK(s["result"]["images"].size() == 11);
  const std::string csv = s["result"]["csv"];
  CHECK(csv.rfind("lambda,distance\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);
}

TEST_CASE("service: typed errors") {
  Harness h;
  const auto expect = [&](const std::string& path, const json& body, int status, const std::string& code) {
    const auto [s, j] = h.post(path, body);
    CHECK_MESSAGE(s == status, path << " " << body.dump() << " -> " << j.dump());
    CHECK(j["code"] == code);
    CHECK(j.contains("message"));
  };
  expect("/api/generate", {{"model", "nope"}}, 404, "unknown_model");
  expect("/api/edit", {{"model", "toy"}, {"base", {{"inversion_id", "inv-missing"}}}}, 404, "unknown_inversion");
  expect("/api/edit", {{"model", "toy"}, {"lambda", {{"sepia", 0.5}}}}, 422, "invalid_request");
  expect("/api/edit", {{"model", "toy"}, {"lambda", {{"blackpoint", 2.5}}}}, 422, "invalid_request");
  expect("/api/edit", {{"model", "toy"}, {"act_t", 1.5}}, 422, "invalid_request");
  expect("/api/sweep", {{"model", "toy"}, {"attribute", "sepia"}}, 422, "invalid_request");
  expect("/api/invert", {{"model", "toy"}, {"image", "!!"}}, 422, "invalid_request");
  expect("/api/generate", {{"seed", 1}}, 422, "invalid_request");

  auto res = h.client().Post("/api/generate", "{not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  const auto [js, j] = h.get("/api/jobs/job-999999");
  CHECK(js == 404);
  CHECK(j["code"] == "unknown_job");
}

TEST_CASE("service: bounded queue rejects with 503 and queued jobs carry no result") {
  Harness h(2);
  h.service.set_paused(true);
  const json gen{{"model", "toy"}, {"seed", 1}, {"steps", 4}};
  const auto [s1, j1] = h.post("/api/generate", gen);
  const auto [s2, j2] = h.post("/api/generate", gen);
  const auto [s3, j3] = h.post("/api/generate", gen);
  CHECK(s1 == 202);
  CHECK(s2 == 202);
  CHECK(s3 == 503);
  CHECK(j3["code"] == "queue_full");
  const auto [qs, queued] = h.get("/api/jobs/" + j1["id"].get<std::string>());
  CHECK(queued["state"] == "queued");
  CHECK_FALSE(queued.contains("result"));
  h.service.set_paused(false);
  CHECK(h.finish(j1)["state"] == "done");
  CHECK(h.finish(j2)["result"]["png"] == h.finish(j1)["result"]["png"]);
}

TEST_CASE("service: a running job reports its state without a result") {
  Harness h;
  // Long enough that polling catches it mid-flight.
  const json sweep{{"model", "toy"}, {"base", {{"seed", 9}}}, {"steps", 200}, {"attribute", "blackpoint"},
                   {"grid", {0.0, 0.25, 0.5, 0.75, 1.0}}};
  const auto [status, job] = h.post("/api/sweep", sweep);
  REQUIRE(status == 202);
  bool saw_running = false;
  for (int i = 0; i < 20000 && !saw_running; ++i) {
    const auto [s, j] = h.get("/api/jobs/" + job["id"].get<std::string>());
    if (j["state"] == "running") {
      saw_running = true;
      CHECK_FALSE(j.contains("result"));
      CHECK(j.contains("started"));
    }
    if (j["state"] == "done") break;
  }
  CHECK(saw_running);
  const auto done = h.finish(job);
  CHECK(done["state"] == "done");

  // Job ordering: states only move forward and done jobs keep their result.
  const auto later = h.get("/api/jobs/" + job["id"].get<std::string>()).second;
  CHECK(later["result"] == done["result"]);
}

TEST_CASE("service: model specs and job serialization") {
  const auto spec = parse_model_spec("toy=/tmp/a.ckpt,/tmp/b.ckpt");
  CHECK(spec.name == "toy");
  CHECK(spec.bundle == "/tmp/a.ckpt");
  CHECK(spec.adapter == "/tmp/b.ckpt");
  CHECK(parse_model_spec("m=x.ckpt").adapter.empty());
  CHECK_THROWS_AS(parse_model_spec("no-equals"), std::invalid_argument);

  Job job;
  job.id = "job-1";
  job.kind = "generate";
  job.state = JobState::kRunning;
  job.result = json{{"png", "x"}};
  auto j = job.to_json();
  CHECK(j["state"] == "running");
  CHECK_FALSE(j.contains("result"));
  job.state = JobState::kFailed;
  job.error = json{{"code", "internal_error"}, {"message", "boom"}};
  j = job.to_json();
  CHECK(j["error"]["code"] == "internal_error");
  CHECK_FALSE(j.contains("result"));
}
