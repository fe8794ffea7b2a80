#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <arecon/explorer.hpp>

namespace {

int cmdRun(const std::string& configPath, std::uint64_t seed, bool seedSet,
           const std::string& policy, const std::vector<std::string>& ablate,
           const std::string& outDir) {
  arecon::RunConfig cfg = arecon::loadRunConfig(configPath);
  if (seedSet) cfg.seed = seed;
  if (!policy.empty()) cfg.policy = policy;
  for (const std::string& a : ablate) cfg.ablations.push_back(a);
  if (!outDir.empty())
    cfg.outDir = outDir;
  else if (const char* env = std::getenv("ARECON_OUT_DIR"))
    cfg.outDir = env;
  cfg.validate();

  arecon::ExplorationResult res = arecon::runExploration(cfg);
  std::printf("steps      %d/%d%s\n", res.stepsCompleted, cfg.steps,
              res.plannerExhausted ? "  (stopped early: planner exhausted)"
                                   : "");
  std::printf("collisions %d\n", res.collisions);
  std::printf("splats     %d   keyframes %d   plan cycles %d\n",
              res.splatCount, res.keyframeCount, res.planCycles);
  if (!res.metrics.curve.empty()) {
    const arecon::MetricsRow& m = res.metrics.curve.back();
    std::printf("acc %.4f   com %.4f   c.r. %.2f%%   mad %.4f\n", m.acc, m.com,
                m.cr, m.mad);
    std::printf("psnr %.2f   ssim %.4f\n", m.psnr, m.ssim);
  }
  std::printf("artifacts in %s\n", res.outDir.c_str());
  return 0;
}

int cmdEval(const std::string& dir) {
  arecon::CheckpointEval ev = arecon::evalCheckpoint(dir);
  std::printf("threshold  %.4f\n", ev.threshold);
  if (ev.geometry.accDefined)
    std::printf("acc        %.4f\n", ev.geometry.acc);
  else
    std::printf("acc        undefined (no reconstruction points)\n");
  std::printf("com        %.4f\n", ev.geometry.com);
  std::printf("c.r.       %.2f%%\n", ev.geometry.cr);
  std::printf("mad        %.4f\n", ev.mad);
  std::printf("psnr       %.2f over %d views\n", ev.render.psnr, ev.render.views);
  std::printf("ssim       %.4f\n", ev.render.ssim);
  return 0;
}

int cmdMesh(const std::string& dir, int res) {
  namespace fs = std::filesystem;
  arecon::ImplicitField field =
      arecon::ImplicitField::load((fs::path(dir) / "field.bin").string());
  arecon::TriMesh mesh = arecon::exportMesh(field, res);
  std::string out = (fs::path(dir) / ("mesh_" + std::to_string(res) + ".ply")).string();
  arecon::writeMeshPly(mesh, out);
  if (!mesh.hasSurface)
    std::printf("field has no zero crossing; wrote empty mesh\n");
  std::printf("%zu vertices, %zu faces -> %s\n", mesh.vertices.size(),
              mesh.faces.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"active reconstruction simulator"};
  app.require_subcommand(1);

  std::string configPath, policy, outDir, ckptDir;
  std::uint64_t seed = 0;
  std::vector<std::string> ablate;
  int meshRes = 96;

  CLI::App* run = app.add_subcommand("run", "run an exploration episode");
  run->add_option("--config", configPath, "run config json")
      ->required()
      ->check(CLI::ExistingFile);
  CLI::Option* seedOpt = run->add_option("--seed", seed, "override the run seed");
  run->add_option("--policy", policy, "ehig | random | frontier-lite");
  run->add_option("--ablate", ablate, "ablation switches")->take_all();
  run->add_option("--out", outDir, "output directory");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", ckptDir, "run output directory")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI::App* mesh = app.add_subcommand("mesh", "extract a mesh from a checkpoint");
  mesh->add_option("--checkpoint", ckptDir, "run output directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  mesh->add_option("--res", meshRes, "marching grid resolution");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmdRun(configPath, seed, seedOpt->count() > 0, policy, ablate,
                    outDir);
    if (ev->parsed()) return cmdEval(ckptDir);
    if (mesh->parsed()) return cmdMesh(ckptDir, meshRes);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
