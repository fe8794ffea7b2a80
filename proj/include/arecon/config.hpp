#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "arecon/fusion.hpp"
#include "arecon/keyframes.hpp"
#include "arecon/planning.hpp"
#include "arecon/splat_optimize.hpp"

namespace arecon {

inline const std::set<std::string>& knownAblations() {
  static const std::set<std::string> s = {
      "no_mlp_uncert", "no_depth_uncert", "no_rgb_uncert",  "no_sdf_temp",
      "no_risk_planning", "no_uncert_keyframe", "temporal_window"};
  return s;
}

inline const std::set<std::string>& knownPolicies() {
  static const std::set<std::string> s = {"ehig", "random", "frontier-lite"};
  return s;
}

// Everything one exploration run needs, JSON-loadable with per-key defaults.
// The embedded parameter blocks carry desk-scale values tuned for the bundled
// scenes; a config file only has to override what it cares about.
struct RunConfig {
  std::string scenePath;
  int steps = 200;
  std::uint64_t seed = 1;
  std::string policy = "ehig";
  std::string outDir = "out";
  std::vector<std::string> ablations;

  // sensor
  int width = 96, height = 72;
  double hfovDeg = 70.0, vfovDeg = 55.0;
  double camNear = 0.08, camFar = 12.0;
  double noiseSigma = 0.0;

  // implicit branch shape
  double fieldCell = 0.24;
  int fieldFeatures = 8, fieldHidden = 32;

  // loop schedule
  int innerIters = 10;     // field steps per exploration step
  int raysPerIter = 96;
  int windowEvery = 5;     // window optimization cadence
  int windowIters = 12;
  int spawnStride = 4;
  int cullEvery = 25;
  int evalEvery = 10;      // metrics cadence (steps)
  int holdoutViews = 4;
  int initScanSteps = 8;   // yaw-in-place steps before the first plan
  int planRetries = 3;     // NBV re-sampling rounds on planner failure
  int maxPlanAge = 12;     // steps before a plan is rebuilt regardless
  int evalSamples = 20000;
  double thresholdVoxels = 2.0;  // C.R. threshold, multiples of voxel size

  ImplicitHyperparams field;
  FusionParams fusion;
  PlannerParams planner;
  KeyframeParams keyframes;
  SplatOptimizeParams splatOpt;
  SdfFuseParams fuse;

  RunConfig() {
    // 6-neighbor dilation under-reaches diagonals; a slower falloff blocks
    // two rings so diagonal grazes keep the agent radius plus slack
    planner.riskDecay = 0.72;
    planner.candidateCount = 48;
  }

  CameraIntrinsics intrinsics() const {
    return CameraIntrinsics::fromFov(width, height, hfovDeg * kPi / 180.0,
                                     vfovDeg * kPi / 180.0, camNear, camFar);
  }

  bool ablated(const std::string& flag) const {
    for (const auto& a : ablations)
      if (a == flag) return true;
    return false;
  }

  void validate() const {
    if (steps < 1) throw std::invalid_argument("step budget must be >= 1");
    if (!knownPolicies().count(policy))
      throw std::invalid_argument("unknown policy: " + policy);
    for (const auto& a : ablations)
      if (!knownAblations().count(a))
        throw std::invalid_argument("unknown ablation flag: " + a);
    if (scenePath.empty()) throw std::invalid_argument("scene path missing");
    if (!std::filesystem::exists(scenePath))
      throw std::invalid_argument("scene file does not exist: " + scenePath);
    if (width < 16 || height < 16) throw std::invalid_argument("render size too small");
    if (!(hfovDeg > 0 && hfovDeg < 180 && vfovDeg > 0 && vfovDeg < 180))
      throw std::invalid_argument("fov out of range");
    if (!(camNear > 0 && camNear < camFar))
      throw std::invalid_argument("camera clip range invalid");
    if (noiseSigma < 0) throw std::invalid_argument("noise sigma must be >= 0");
    if (fieldCell <= 0 || fieldFeatures < 1 || fieldHidden < 1)
      throw std::invalid_argument("field shape invalid");
    if (innerIters < 1 || raysPerIter < 1 || windowEvery < 1 || windowIters < 0 ||
        spawnStride < 1 || cullEvery < 1 || evalEvery < 1 || holdoutViews < 1 ||
        initScanSteps < 0 || planRetries < 0 || maxPlanAge < 1 || evalSamples < 1)
      throw std::invalid_argument("schedule values out of range");
    if (thresholdVoxels <= 0) throw std::invalid_argument("thresholdVoxels <= 0");
    field.validate(camFar);
    fusion.validate();
    planner.validate();
    keyframes.validate();
  }
};

// ---------------------------------------------------------------- JSON I/O
// Readers take j.value(key, current) so partial blocks override defaults.

inline void to_json(nlohmann::json& j, const ImplicitHyperparams& p) {
  j = {{"truncation", p.truncation},     {"depth_trunc", p.depthTrunc},
       {"lambda_rgb", p.lambdaRgb},      {"lambda_depth", p.lambdaDepth},
       {"lambda_sdf", p.lambdaSdf},      {"lambda_uncert", p.lambdaUncert},
       {"learning_rate", p.learningRate}, {"samples_per_ray", p.samplesPerRay},
       {"invalid_ray_weight", p.invalidRayWeight}};
}

inline void from_json(const nlohmann::json& j, ImplicitHyperparams& p) {
  p.truncation = j.value("truncation", p.truncation);
  p.depthTrunc = j.value("depth_trunc", p.depthTrunc);
  p.lambdaRgb = j.value("lambda_rgb", p.lambdaRgb);
  p.lambdaDepth = j.value("lambda_depth", p.lambdaDepth);
  p.lambdaSdf = j.value("lambda_sdf", p.lambdaSdf);
  p.lambdaUncert = j.value("lambda_uncert", p.lambdaUncert);
  p.learningRate = j.value("learning_rate", p.learningRate);
  p.samplesPerRay = j.value("samples_per_ray", p.samplesPerRay);
  p.invalidRayWeight = j.value("invalid_ray_weight", p.invalidRayWeight);
}

inline void to_json(nlohmann::json& j, const FusionParams& p) {
  j = {{"alpha1", p.alpha1}, {"alpha2", p.alpha2}, {"alpha3", p.alpha3},
       {"beta1", p.beta1},   {"beta2", p.beta2},   {"tau_s", p.tauS},
       {"tau_n", p.tauN},    {"tau_c", p.tauC},    {"tau_f", p.tauF},
       {"lambda_imp", p.lambdaImp}, {"lambda_exp", p.lambdaExp},
       {"top_k", p.topK},    {"sigma_occ", p.sigmaOcc},
       {"w_depth", p.wDepth}, {"w_color", p.wColor}};
}

inline void from_json(const nlohmann::json& j, FusionParams& p) {
  p.alpha1 = j.value("alpha1", p.alpha1);
  p.alpha2 = j.value("alpha2", p.alpha2);
  p.alpha3 = j.value("alpha3", p.alpha3);
  p.beta1 = j.value("beta1", p.beta1);
  p.beta2 = j.value("beta2", p.beta2);
  p.tauS = j.value("tau_s", p.tauS);
  p.tauN = j.value("tau_n", p.tauN);
  p.tauC = j.value("tau_c", p.tauC);
  p.tauF = j.value("tau_f", p.tauF);
  p.lambdaImp = j.value("lambda_imp", p.lambdaImp);
  p.lambdaExp = j.value("lambda_exp", p.lambdaExp);
  p.topK = j.value("top_k", p.topK);
  p.sigmaOcc = j.value("sigma_occ", p.sigmaOcc);
  p.wDepth = j.value("w_depth", p.wDepth);
  p.wColor = j.value("w_color", p.wColor);
}

inline void to_json(nlohmann::json& j, const PlannerParams& p) {
  j = {{"alpha", p.alpha}, {"beta", p.beta}, {"eta", p.eta}, {"lambda", p.lambda},
       {"candidate_count", p.candidateCount}, {"ray_budget_x", p.rayBudgetX},
       {"ray_budget_y", p.rayBudgetY}, {"occ_threshold", p.occThreshold},
       {"aim_range", p.aimRange}, {"yaw_jitter", p.yawJitter},
       {"rrt_iterations", p.rrtIterations}, {"rrt_step", p.rrtStep},
       {"goal_radius", p.goalRadius}, {"rewire_radius", p.rewireRadius},
       {"goal_bias", p.goalBias}, {"risk_threshold", p.riskThreshold},
       {"clearance_margin", p.clearanceMargin}, {"sigma_risk", p.sigmaRisk},
       {"risk_decay", p.riskDecay}};
}

inline void from_json(const nlohmann::json& j, PlannerParams& p) {
  p.alpha = j.value("alpha", p.alpha);
  p.beta = j.value("beta", p.beta);
  p.eta = j.value("eta", p.eta);
  p.lambda = j.value("lambda", p.lambda);
  p.candidateCount = j.value("candidate_count", p.candidateCount);
  p.rayBudgetX = j.value("ray_budget_x", p.rayBudgetX);
  p.rayBudgetY = j.value("ray_budget_y", p.rayBudgetY);
  p.occThreshold = j.value("occ_threshold", p.occThreshold);
  p.aimRange = j.value("aim_range", p.aimRange);
  p.yawJitter = j.value("yaw_jitter", p.yawJitter);
  p.rrtIterations = j.value("rrt_iterations", p.rrtIterations);
  p.rrtStep = j.value("rrt_step", p.rrtStep);
  p.goalRadius = j.value("goal_radius", p.goalRadius);
  p.rewireRadius = j.value("rewire_radius", p.rewireRadius);
  p.goalBias = j.value("goal_bias", p.goalBias);
  p.riskThreshold = j.value("risk_threshold", p.riskThreshold);
  p.clearanceMargin = j.value("clearance_margin", p.clearanceMargin);
  p.sigmaRisk = j.value("sigma_risk", p.sigmaRisk);
  p.riskDecay = j.value("risk_decay", p.riskDecay);
}

inline void to_json(nlohmann::json& j, const KeyframeParams& p) {
  j = {{"tau_view", p.tauView}, {"tau_info", p.tauInfo}, {"tau_rho", p.tauRho},
       {"tau_h", p.tauH}, {"window_size", p.windowSize},
       {"theta_mix", p.thetaMix}, {"iou_rays", p.iouRays}};
}

inline void from_json(const nlohmann::json& j, KeyframeParams& p) {
  p.tauView = j.value("tau_view", p.tauView);
  p.tauInfo = j.value("tau_info", p.tauInfo);
  p.tauRho = j.value("tau_rho", p.tauRho);
  p.tauH = j.value("tau_h", p.tauH);
  p.windowSize = j.value("window_size", p.windowSize);
  p.thetaMix = j.value("theta_mix", p.thetaMix);
  p.iouRays = j.value("iou_rays", p.iouRays);
}

inline void to_json(nlohmann::json& j, const SplatOptimizeParams& p) {
  j = {{"w_photo", p.wPhoto}, {"w_geo", p.wGeo}, {"w_align", p.wAlign},
       {"w_reg", p.wReg}, {"lr_mu", p.lrMu}, {"lr_s", p.lrS},
       {"lr_alpha", p.lrAlpha}, {"lr_c", p.lrC},
       {"align_sample_cap", p.alignSampleCap}};
}

inline void from_json(const nlohmann::json& j, SplatOptimizeParams& p) {
  p.wPhoto = j.value("w_photo", p.wPhoto);
  p.wGeo = j.value("w_geo", p.wGeo);
  p.wAlign = j.value("w_align", p.wAlign);
  p.wReg = j.value("w_reg", p.wReg);
  p.lrMu = j.value("lr_mu", p.lrMu);
  p.lrS = j.value("lr_s", p.lrS);
  p.lrAlpha = j.value("lr_alpha", p.lrAlpha);
  p.lrC = j.value("lr_c", p.lrC);
  p.alignSampleCap = j.value("align_sample_cap", p.alignSampleCap);
}

inline void to_json(nlohmann::json& j, const SdfFuseParams& p) {
  j = {{"tau_band", p.tauBand}, {"eta_ema", p.etaEma}};
}

inline void from_json(const nlohmann::json& j, SdfFuseParams& p) {
  p.tauBand = j.value("tau_band", p.tauBand);
  p.etaEma = j.value("eta_ema", p.etaEma);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j["scene"] = c.scenePath;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  j["policy"] = c.policy;
  j["out_dir"] = c.outDir;
  j["ablations"] = c.ablations;
  j["camera"] = {{"width", c.width},       {"height", c.height},
                 {"hfov_deg", c.hfovDeg},  {"vfov_deg", c.vfovDeg},
                 {"near", c.camNear},      {"far", c.camFar},
                 {"noise_sigma", c.noiseSigma}};
  j["field_shape"] = {{"cell", c.fieldCell},
                      {"features", c.fieldFeatures},
                      {"hidden", c.fieldHidden}};
  j["schedule"] = {{"inner_iters", c.innerIters},
                   {"rays_per_iter", c.raysPerIter},
                   {"window_every", c.windowEvery},
                   {"window_iters", c.windowIters},
                   {"spawn_stride", c.spawnStride},
                   {"cull_every", c.cullEvery},
                   {"eval_every", c.evalEvery},
                   {"holdout_views", c.holdoutViews},
                   {"init_scan_steps", c.initScanSteps},
                   {"plan_retries", c.planRetries},
                   {"max_plan_age", c.maxPlanAge},
                   {"eval_samples", c.evalSamples},
                   {"threshold_voxels", c.thresholdVoxels}};
  j["field"] = c.field;
  j["fusion"] = c.fusion;
  j["planner"] = c.planner;
  j["keyframes"] = c.keyframes;
  j["splat_opt"] = c.splatOpt;
  j["fuse"] = c.fuse;
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.scenePath = j.value("scene", c.scenePath);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.policy = j.value("policy", c.policy);
  c.outDir = j.value("out_dir", c.outDir);
  if (j.contains("ablations"))
    c.ablations = j.at("ablations").get<std::vector<std::string>>();
  if (j.contains("camera")) {
    const auto& cam = j.at("camera");
    c.width = cam.value("width", c.width);
    c.height = cam.value("height", c.height);
    c.hfovDeg = cam.value("hfov_deg", c.hfovDeg);
    c.vfovDeg = cam.value("vfov_deg", c.vfovDeg);
    c.camNear = cam.value("near", c.camNear);
    c.camFar = cam.value("far", c.camFar);
    c.noiseSigma = cam.value("noise_sigma", c.noiseSigma);
  }
  if (j.contains("field_shape")) {
    const auto& f = j.at("field_shape");
    c.fieldCell = f.value("cell", c.fieldCell);
    c.fieldFeatures = f.value("features", c.fieldFeatures);
    c.fieldHidden = f.value("hidden", c.fieldHidden);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    c.innerIters = s.value("inner_iters", c.innerIters);
    c.raysPerIter = s.value("rays_per_iter", c.raysPerIter);
    c.windowEvery = s.value("window_every", c.windowEvery);
    c.windowIters = s.value("window_iters", c.windowIters);
    c.spawnStride = s.value("spawn_stride", c.spawnStride);
    c.cullEvery = s.value("cull_every", c.cullEvery);
    c.evalEvery = s.value("eval_every", c.evalEvery);
    c.holdoutViews = s.value("holdout_views", c.holdoutViews);
    c.initScanSteps = s.value("init_scan_steps", c.initScanSteps);
    c.planRetries = s.value("plan_retries", c.planRetries);
    c.maxPlanAge = s.value("max_plan_age", c.maxPlanAge);
    c.evalSamples = s.value("eval_samples", c.evalSamples);
    c.thresholdVoxels = s.value("threshold_voxels", c.thresholdVoxels);
  }
  if (j.contains("field")) j.at("field").get_to(c.field);
  if (j.contains("fusion")) j.at("fusion").get_to(c.fusion);
  if (j.contains("planner")) j.at("planner").get_to(c.planner);
  if (j.contains("keyframes")) j.at("keyframes").get_to(c.keyframes);
  if (j.contains("splat_opt")) j.at("splat_opt").get_to(c.splatOpt);
  if (j.contains("fuse")) j.at("fuse").get_to(c.fuse);
}

// Relative scene paths resolve against the config file's directory.
inline RunConfig loadRunConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  nlohmann::json j;
  in >> j;
  RunConfig cfg = j.get<RunConfig>();
  if (!cfg.scenePath.empty()) {
    std::filesystem::path sp(cfg.scenePath);
    if (sp.is_relative()) {
      std::filesystem::path base = std::filesystem::path(path).parent_path();
      std::filesystem::path resolved = base / sp;
      if (std::filesystem::exists(resolved)) cfg.scenePath = resolved.string();
    }
  }
  return cfg;
}

inline void saveRunConfig(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  nlohmann::json j = cfg;
  out << j.dump(2) << "\n";
}

}  // namespace arecon
