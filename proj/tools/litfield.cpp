// litfield command-line front end: simulate, reconstruct, serve, replay, evaluate.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "litfield/litfield.hpp"

namespace fs = std::filesystem;
using namespace litfield;
using Clock = std::chrono::steady_clock;

namespace {

constexpr const char* kDefaultBind = "127.0.0.1:7878";

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

Vec3 parse_vec3(const std::string& s) {
  std::string t = s;
  for (char& c : t)
    if (c == ',') c = ' ';
  std::istringstream is(t);
  Vec3 v;
  if (!(is >> v.x() >> v.y() >> v.z())) throw Error(ErrorCode::kInvalidArgument, "expected x,y,z but got '" + s + "'");
  return v;
}

std::string format_vec3(const Vec3& v) {
  std::ostringstream os;
  os << v.x() << ',' << v.y() << ',' << v.z();
  return os.str();
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.bin", i);
  return buf;
}

std::vector<fs::path> frame_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / frame_name(i);
    if (!fs::exists(p)) break;
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scene = "six-color";
  std::string preset = "medium";
  std::string rec = "0,0.1,0";
  int views = 0;  // 0: preset view count
  int guided = 0;
  double height_cm = 170.0;
  double steps = 1.0;
  double fov_deg = 65.0;
  std::uint64_t seed = 1;
  std::string out;
};

int run_simulate(const SimulateArgs& a) {
  const SyntheticScene scene = load_scene(a.scene);
  const Preset preset = parse_preset(a.preset);
  const SessionConfig cfg = SessionConfig::from_preset(preset);
  const Vec3 rec = parse_vec3(a.rec);
  const int views = a.views > 0 ? a.views : cfg.num_views;
  if (views > 8) throw Error(ErrorCode::kInvalidArgument, "the orbit has 8 positions; --views must be <= 8");
  if (a.guided != 0 && a.guided != 1 && a.guided != 3 && a.guided != 5 && a.guided != 9)
    throw Error(ErrorCode::kInvalidArgument, "--guided must be 0, 1, 3, 5 or 9");

  const Intrinsics k = Intrinsics::from_fov(a.fov_deg, cfg.near_capture_res.width, cfg.near_capture_res.height);
  const Trajectory orbit = orbit_trajectory(rec, a.height_cm, a.steps);
  // The seed only picks where on the orbit the walk starts.
  std::mt19937_64 rng(a.seed);
  const std::size_t start = static_cast<std::size_t>(rng() % orbit.size());
  const Rgb ambient = Rgb::Constant(0.5f);

  const fs::path out(a.out);
  fs::create_directories(out);
  std::size_t frame = 0;
  std::int64_t clock_ms = 0;

  // Guided far-field frames first, taken from the first orbit position.
  const Vec3 user = orbit[start].pose.translation();
  if (a.guided > 0) {
    const GuidancePlan plan = plan_guided_movement((rec - user).normalized(), a.guided);
    for (const SphericalDir& d : plan.directions) {
      CameraFrame f = render_rgbd(scene, Pose::look_at(user, user + d.to_vector()), k, 0, clock_ms);
      dataset::write_bytes(out / frame_name(frame++), protocol::encode_packet(protocol::make_far_keyframe(1, f)));
      clock_ms += 300;
    }
  }
  for (int v = 0; v < views; ++v) {
    const std::size_t idx = (start + static_cast<std::size_t>(v) * orbit.size() / static_cast<std::size_t>(views)) % orbit.size();
    CameraFrame f = render_rgbd(scene, orbit[idx].pose, k, static_cast<std::uint32_t>(v + 1), clock_ms);
    dataset::write_bytes(out / frame_name(frame++), protocol::encode_packet(protocol::make_near_keyframe(1, f)));
    clock_ms += 300;
  }

  dataset::write_bytes(out / "init.bin",
                       protocol::encode_packet(protocol::make_session_init(1, rec, preset, cfg.envmap_res, k, ambient)));
  dataset::write_map(out / "ground_truth.ppm", ground_truth_envmap(scene, rec, cfg.envmap_res));

  dataset::Manifest m;
  m.set("scene", a.scene);
  m.set("preset", a.preset);
  m.set("rec_pos", format_vec3(rec));
  m.set("views", views);
  m.set("guided", a.guided);
  m.set("user_height_cm", a.height_cm);
  m.set("steps", a.steps);
  m.set("fov_deg", a.fov_deg);
  m.set("seed", a.seed);
  m.set("orbit_start", start);
  m.set("frames", frame);
  m.set("envmap_width", cfg.envmap_res.width);
  m.set("envmap_height", cfg.envmap_res.height);
  m.save(out / "manifest.txt");
  std::cout << "wrote " << frame << " frames to " << out.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  std::string dataset;
  std::string out;
  std::string preset;
  bool icp = false;
};

void print_timings(const StageTimings& t, std::size_t frames) {
  const double n = frames ? static_cast<double>(frames) : 1.0;
  std::printf("%-28s %12s %12s\n", "stage", "total_ms", "mean_ms");
  auto row = [&](const char* name, double v) { std::printf("%-28s %12.2f %12.2f\n", name, v, v / n); };
  row("data decode", t.data_decode_ms);
  row("dense cloud", t.dense_cloud_ms);
  row("multi-resolution projection", t.multires_projection_ms);
  row("sparse cloud", t.sparse_cloud_ms);
  row("anchor extrapolation", t.anchor_extrapolation_ms);
}

int run_reconstruct(const ReconstructArgs& a) {
  const fs::path dir(a.dataset);
  auto init = std::get<protocol::SessionInit>(protocol::decode_packet(dataset::read_bytes(dir / "init.bin")));
  if (!a.preset.empty()) {
    init.preset = static_cast<std::uint8_t>(parse_preset(a.preset));
    init.envmap_width = init.envmap_height = 0;
  }
  SessionConfig cfg = protocol::config_from(init);
  cfg.icp_enabled = a.icp;
  const Intrinsics k = protocol::intrinsics_from_wire(init.intrinsics, init.native_width, init.native_height);
  auto session = ReconstructionSession::create(protocol::rec_pos_from(init), cfg, k, k.resolution(),
                                               protocol::ambient_from(init));

  const auto files = frame_files(dir);
  std::size_t near = 0;
  std::size_t far = 0;
  std::size_t aligned = 0;
  for (const fs::path& p : files) {
    const auto t0 = Clock::now();
    const protocol::Packet packet = protocol::decode_packet(dataset::read_bytes(p));
    if (const auto* nk = std::get_if<protocol::NearKeyframe>(&packet)) {
      const CameraFrame f = protocol::frame_from(*nk);
      session.record_decode_ms(ms_since(t0));
      session.ingest_near(f);
      ++near;
      if (cfg.icp_enabled)
        if (auto job = session.prepare_registration(f.view_id)) aligned += session.apply_registration(run_registration(*job));
    } else if (const auto* fk = std::get_if<protocol::FarKeyframe>(&packet)) {
      const CameraFrame f = protocol::frame_from(*fk);
      session.record_decode_ms(ms_since(t0));
      session.ingest_far(f);
      ++far;
    } else {
      throw Error(ErrorCode::kProtocol, p.string() + " is not a keyframe");
    }
  }

  const fs::path out = a.out.empty() ? dir : fs::path(a.out);
  fs::create_directories(out);
  dataset::write_map(out / "envmap.ppm", session.compose());
  EnvironmentMap far_map(session.far_map().width, session.far_map().height);
  far_map.pixels = session.far_map().color;
  dataset::write_ppm(out / "far.ppm", far_map);
  std::printf("%zu near, %zu far keyframes; %zu near-valid pixels; %.1f%% anchors observed",
              near, far, session.near_map().valid_count(), 100.0 * session.anchors().observed_fraction());
  if (cfg.icp_enabled) std::printf("; %zu views re-aligned", aligned);
  std::printf("\n");
  print_timings(session.total_timings(), files.size());
  return 0;
}

// ---------------------------------------------------------------------------
// serve

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
  std::string bind = kDefaultBind;
  std::string preset;
  bool icp = false;
  int max_connections = 64;
};

int run_serve(const ServeArgs& a) {
  service::ServerConfig cfg;
  cfg.bind = service::parse_endpoint(a.bind);
  cfg.icp_enabled = a.icp;
  cfg.max_connections = a.max_connections;
  if (!a.preset.empty()) cfg.forced_preset = parse_preset(a.preset);
  cfg.log = [](const std::string& m) { std::cerr << m << '\n'; };
  auto server = service::serve(cfg);
  std::cout << "listening on " << cfg.bind.host << ':' << server->port() << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server->stop();
  return 0;
}

// ---------------------------------------------------------------------------
// replay

struct ReplayArgs {
  std::string dataset;
  std::string bind = kDefaultBind;
  std::string out;
};

int run_replay(const ReplayArgs& a) {
  const fs::path dir(a.dataset);
  const fs::path out = a.out.empty() ? dir / "replay" : fs::path(a.out);
  fs::create_directories(out);
  auto client = service::Client::connect(service::parse_endpoint(a.bind));

  auto send_file = [&](const fs::path& p) {
    const auto t0 = Clock::now();
    const EnvironmentMap map = client.send(protocol::decode_packet(dataset::read_bytes(p)));
    const double ms = ms_since(t0);
    std::printf("%-16s %8.1f ms\n", p.filename().string().c_str(), ms);
    return map;
  };

  EnvironmentMap last = send_file(dir / "init.bin");
  const auto files = frame_files(dir);
  for (std::size_t i = 0; i < files.size(); ++i) {
    last = send_file(files[i]);
    char name[32];
    std::snprintf(name, sizeof name, "response_%03zu.ppm", i);
    dataset::write_ppm(out / name, last);
  }
  while (auto u = client.poll_update(std::chrono::milliseconds(200))) last = protocol::map_from(u->width, u->height, u->rgb);
  dataset::write_ppm(out / "envmap.ppm", last);
  std::printf("stored %zu responses in %s\n", files.size(), out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string dataset;
  std::vector<std::string> maps;
};

int run_evaluate(const EvaluateArgs& a) {
  const EnvironmentMap gt = dataset::read_map(fs::path(a.dataset) / "ground_truth.ppm");
  std::vector<std::string> maps = a.maps;
  if (maps.empty()) maps.push_back((fs::path(a.dataset) / "envmap.ppm").string());
  std::printf("map\tpsnr_db\tssim\n");
  for (const std::string& path : maps) {
    const EnvironmentMap m = dataset::read_map(path);
    std::printf("%s\t%.4f\t%.6f\n", path.c_str(), psnr(m, gt), ssim(m, gt));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lighting reconstruction from posed RGB-D observations"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Render a synthetic dataset (keyframes, manifest, ground truth)");
  simulate->add_option("--scene", sim.scene, "Scene file or built-in name (six-color, two-tone, furnished)");
  simulate->add_option("--preset", sim.preset, "low, medium or high")->check(CLI::IsMember({"low", "medium", "high"}));
  simulate->add_option("--views", sim.views, "Near-field orbit views (default: preset view count)");
  simulate->add_option("--guided", sim.guided, "Guided far-field frames: 0, 1, 3, 5 or 9");
  simulate->add_option("--rec", sim.rec, "Reconstruction position x,y,z in meters");
  simulate->add_option("--height", sim.height_cm, "User height in cm (160, 170, 180)");
  simulate->add_option("--steps", sim.steps, "Orbit radius in steps (0.5, 1, 1.5)");
  simulate->add_option("--fov", sim.fov_deg, "Horizontal field of view in degrees");
  simulate->add_option("--seed", sim.seed, "Seed for the orbit start position");
  simulate->add_option("--out", sim.out, "Output dataset directory")->required();

  ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "Run the pipeline offline over a dataset");
  reconstruct->add_option("dataset", rec.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  reconstruct->add_option("--out", rec.out, "Output directory (default: the dataset directory)");
  reconstruct->add_option("--preset", rec.preset, "Override the dataset preset")
      ->check(CLI::IsMember({"low", "medium", "high"}));
  reconstruct->add_flag("--icp", rec.icp, "Register each near view against the buffer");

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Run the reconstruction service");
  serve->add_option("--bind", srv.bind, "host:port to listen on")->envname("LITFIELD_BIND");
  serve->add_option("--preset", srv.preset, "Force every session to this preset")
      ->check(CLI::IsMember({"low", "medium", "high"}));
  serve->add_flag("--icp", srv.icp, "Enable background registration");
  serve->add_option("--max-connections", srv.max_connections, "Concurrent connection limit")->check(CLI::PositiveNumber);

  ReplayArgs rep;
  auto* replay = app.add_subcommand("replay", "Stream a dataset to a running service");
  replay->add_option("dataset", rep.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  replay->add_option("--bind", rep.bind, "Server host:port")->envname("LITFIELD_BIND");
  replay->add_option("--out", rep.out, "Directory for returned maps (default: <dataset>/replay)");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "PSNR/SSIM of maps against the dataset ground truth (TSV)");
  evaluate->add_option("dataset", ev.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("maps", ev.maps, "Map files (PPM; a sibling .f32 is preferred when present)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) return run_simulate(sim);
    if (*reconstruct) return run_reconstruct(rec);
    if (*serve) return run_serve(srv);
    if (*replay) return run_replay(rep);
    if (*evaluate) return run_evaluate(ev);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
