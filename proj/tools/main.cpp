// lorapatch: end-to-end command surface for the LoRA patching toolkit.
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lorapatch/attacks.hpp"
#include "lorapatch/dataio.hpp"
#include "lorapatch/errors.hpp"
#include "lorapatch/finetune.hpp"
#include "lorapatch/metrics.hpp"
#include "lorapatch/model_zoo.hpp"
#include "lorapatch/patchio.hpp"
#include "lorapatch/sha256.hpp"
#include "lorapatch/surgery.hpp"
#include "lorapatch/watermark.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lorapatch;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

std::string file_checksum(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return to_hex(sha256(bytes.data(), bytes.size()));
}

void write_manifest(const std::string& dir, const std::string& command, const json& config,
                    const json& inputs, const json& outputs = json::object()) {
  fs::create_directories(dir);
  json m{{"command", command}, {"config", config}, {"inputs", inputs}, {"outputs", outputs}};
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw IoError("cannot write manifest in " + dir);
  f << m.dump(2) << "\n";
}

std::vector<Tensor> forward_all(const std::function<Tensor(const Tensor&)>& fwd,
                                const dataio::Dataset& ds, int batch = 8) {
  std::vector<Tensor> out;
  out.reserve(ds.size());
  for (int first = 0; first < ds.size(); first += batch) {
    const int count = std::min(batch, ds.size() - first);
    Tensor y = fwd(ds.stack(first, count));
    for (int k = 0; k < count; ++k) out.push_back(y.slice(k));
  }
  return out;
}

std::vector<Tensor> to_images(const dataio::Dataset& ds) {
  std::vector<Tensor> out;
  out.reserve(ds.size());
  for (const auto& it : ds.items) out.push_back(it.image);
  return out;
}

metrics::MetricRow eval_row(const std::string& defense, const std::string& bypass,
                            const std::string& model, const std::string& scenario,
                            const std::vector<Tensor>& outputs,
                            const std::vector<Tensor>& desired, double tau,
                            zoo::FeatureEncoder* fid_encoder) {
  metrics::MetricRow row;
  row.defense = defense;
  row.bypass = bypass;
  row.model = model;
  row.scenario = scenario;
  row.n_images = static_cast<int>(outputs.size());
  double l2 = 0, ss = 0;
  std::vector<double> per_pair(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    per_pair[i] = metrics::l2_distance(outputs[i], desired[i]);
    l2 += per_pair[i];
    ss += metrics::ssim(outputs[i], desired[i]);
  }
  row.l2 = l2 / outputs.size();
  row.ssim = ss / outputs.size();
  row.dsr = metrics::dsr(per_pair, {tau});
  if (fid_encoder) row.fid = metrics::fid(outputs, desired, *fid_encoder);
  return row;
}

// ---------------------------------------------------------------- commands

struct SynthArgs {
  int n = 1000, size = 64;
  unsigned seed = 1;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  dataio::Dataset ds = dataio::synth_faces(a.n, a.size, a.seed);
  dataio::save_dataset_png(ds, a.out, "synth_faces");
  write_manifest(a.out, "synth-data",
                 json{{"n", a.n}, {"size", a.size}, {"seed", a.seed}, {"out", a.out}},
                 json::object(), json{{"count", ds.size()}});
  std::cout << "wrote " << ds.size() << " images to " << a.out << "\n";
  return 0;
}

struct TrainGenArgs {
  std::string data, out, transform = "channel_permute";
  int size = 64, limit = -1, epochs = 30, batch = 8;
  int base_width = 32, down = 2, res = 2, up = 2;
  unsigned seed = 7, split_seed = 11;
  float lr = 1e-3f;
  double target_mse = 0.01;
};

int cmd_train_gen(const TrainGenArgs& a) {
  dataio::Dataset ds = dataio::load_folder(a.data, a.size, a.limit);
  auto [train, heldout] = dataio::split(ds, {0.8, 0.2}, a.split_seed);
  zoo::GeneratorSpec spec;
  spec.base_width = a.base_width;
  spec.num_downsample = a.down;
  spec.num_residual = a.res;
  spec.num_upsample = a.up;
  spec.seed = a.seed;
  zoo::Generator gen = zoo::build_toy_generator(spec);
  zoo::TransformSpec transform = zoo::TransformSpec::parse(a.transform);
  zoo::TrainGenResult r =
      zoo::train_toy_generator(gen, train, heldout, transform, a.epochs, a.lr, a.batch, a.target_mse);
  patchio::save_generator(gen, a.out);
  write_manifest(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string(),
                 "train-gen",
                 json{{"data", a.data}, {"size", a.size}, {"limit", a.limit},
                      {"transform", a.transform}, {"epochs", a.epochs}, {"lr", a.lr},
                      {"batch", a.batch}, {"target_mse", a.target_mse},
                      {"base_width", a.base_width}, {"down", a.down}, {"res", a.res},
                      {"up", a.up}, {"seed", a.seed}},
                 json{{"model_checksum", gen.checksum()}},
                 json{{"heldout_mse", r.heldout_mse}, {"epochs_run", r.epochs_run},
                      {"model", a.out}});
  std::cout << "held-out MSE " << r.heldout_mse << " after " << r.epochs_run << " epochs; saved "
            << a.out << "\n";
  return 0;
}

struct ProtectArgs {
  std::string model, data, out, scenario = "standard", patch;
  int size = 64, limit = -1, steps = 10;
  float eps = 0.05f, step_size = 0.01f;
};

int cmd_protect(const ProtectArgs& a) {
  if (a.scenario != "standard" && a.scenario != "leakage")
    throw ConfigError("protect: scenario must be standard or leakage");
  if (a.scenario == "leakage" && a.patch.empty())
    throw ConfigError("protect: leakage scenario requires --patch");

  zoo::Generator gen = patchio::load_generator(a.model);
  dataio::Dataset ds = dataio::load_folder(a.data, a.size, a.limit);

  attacks::AttackSpec spec;
  spec.epsilon = a.eps;
  spec.steps = a.steps;
  spec.step_size = a.step_size;

  std::optional<surgery::PatchedGenerator> patched;
  std::string target_checksum = gen.checksum();
  if (a.scenario == "leakage") {
    patched = surgery::apply_patch(gen, patchio::load_patch(a.patch));
    target_checksum = file_checksum(a.patch);
  }
  attacks::Target target = patched ? attacks::target_of(*patched) : attacks::target_of(gen);

  dataio::Dataset adv = attacks::protect(target, ds, spec);
  attacks::save_protected(adv, ds, spec, target_checksum, a.out);
  json inputs{{"model_checksum", file_checksum(a.model)}};
  if (!a.patch.empty()) inputs["patch_checksum"] = file_checksum(a.patch);
  write_manifest(a.out, "protect",
                 json{{"model", a.model}, {"data", a.data}, {"eps", a.eps}, {"steps", a.steps},
                      {"step_size", a.step_size}, {"scenario", a.scenario}, {"size", a.size},
                      {"limit", a.limit}},
                 inputs, json{{"count", adv.size()}});
  std::cout << "protected " << adv.size() << " images (" << a.scenario << ") to " << a.out << "\n";
  return 0;
}

struct PatchTrainArgs {
  std::string model, data, out, mode = "bypass";
  int size = 64, limit = -1, rank = 8, epochs = 1, batch = 4, steps = 10;
  float alpha = 1.f, eps = 0.05f, lambda1 = 0.1f, lambda2 = 0.1f, lr = 1e-4f, step_size = 0.01f;
  unsigned seed = 0;
  bool no_gating = false, no_mmfa = false, no_adversarial = false;
};

int cmd_patch_train(const PatchTrainArgs& a) {
  zoo::Generator gen = patchio::load_generator(a.model);
  dataio::Dataset ds = dataio::load_folder(a.data, a.size, a.limit);

  finetune::FinetuneConfig cfg;
  cfg.rank = a.rank;
  cfg.alpha = a.alpha;
  cfg.epsilon = a.eps;
  cfg.lambda1 = a.lambda1;
  cfg.lambda2 = a.lambda2;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.mode = a.mode;
  cfg.inner_attack.steps = a.steps;
  cfg.inner_attack.step_size = a.step_size;
  cfg.use_gating = !a.no_gating;
  cfg.use_mmfa = !a.no_mmfa;
  cfg.use_adversarial = !a.no_adversarial;
  cfg.seed = a.seed;

  finetune::FinetuneResult r = finetune::run_finetune(gen, ds, std::nullopt, cfg);
  const std::string trace_path = a.out + ".trace.csv";
  r.trace.save_csv(trace_path);
  patchio::save_patch(r.patch, a.out);
  const std::string dir =
      fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string();
  write_manifest(dir, "patch-train",
                 json{{"model", a.model}, {"data", a.data}, {"mode", a.mode}, {"rank", a.rank},
                      {"alpha", a.alpha}, {"eps", a.eps}, {"lambda1", a.lambda1},
                      {"lambda2", a.lambda2}, {"lr", a.lr}, {"batch", a.batch},
                      {"epochs", a.epochs}, {"inner_steps", a.steps},
                      {"inner_step_size", a.step_size}, {"use_gating", cfg.use_gating},
                      {"use_mmfa", cfg.use_mmfa}, {"use_adversarial", cfg.use_adversarial},
                      {"seed", a.seed}, {"size", a.size}, {"limit", a.limit}},
                 json{{"model_checksum", file_checksum(a.model)}},
                 json{{"patch", a.out}, {"trace", trace_path}, {"diverged", r.diverged},
                      {"iterations", r.trace.rows.size()}});
  if (r.diverged) {
    std::cerr << "training diverged: " << r.divergence_reason << " (trace at " << trace_path
              << ")\n";
    return kExitDivergence;
  }
  std::cout << "patch saved to " << a.out << " after " << r.trace.rows.size() << " iterations\n";
  return 0;
}

struct ForgeArgs {
  std::string model, patch, data, out;
  int size = 64, limit = -1, sheet_rows = 8;
};

int cmd_forge(const ForgeArgs& a) {
  zoo::Generator gen = patchio::load_generator(a.model);
  dataio::Dataset ds = dataio::load_folder(a.data, a.size, a.limit);

  std::optional<surgery::PatchedGenerator> patched;
  if (!a.patch.empty()) patched = surgery::apply_patch(gen, patchio::load_patch(a.patch));
  auto fwd = [&](const Tensor& x) { return patched ? patched->forward(x) : gen.forward(x); };

  std::vector<Tensor> outputs = forward_all(fwd, ds);
  fs::create_directories(a.out);
  dataio::Dataset out_ds;
  out_ds.height = ds.height;
  out_ds.width = ds.width;
  for (int i = 0; i < ds.size(); ++i) out_ds.items.push_back({ds.items[i].id, outputs[i]});
  dataio::save_dataset_png(out_ds, a.out, "forge");

  const int rows = std::min(a.sheet_rows, ds.size());
  std::vector<Tensor> in_col, out_col;
  for (int i = 0; i < rows; ++i) {
    in_col.push_back(ds.items[i].image);
    out_col.push_back(outputs[i]);
  }
  // Sibling file: the output directory itself must stay a pure image folder.
  metrics::save_contact_sheet({in_col, out_col}, a.out + ".contact_sheet.png");

  json inputs{{"model_checksum", file_checksum(a.model)}};
  if (!a.patch.empty()) inputs["patch_checksum"] = file_checksum(a.patch);
  write_manifest(a.out, "forge",
                 json{{"model", a.model}, {"patch", a.patch}, {"data", a.data}, {"size", a.size},
                      {"limit", a.limit}},
                 inputs, json{{"count", ds.size()}});
  std::cout << "forged " << ds.size() << " images to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string desired, out;
  std::vector<std::string> candidates;  // label=dir
  int size = 64, limit = -1;
  double tau = 0.05;
  bool with_fid = false;
};

int cmd_eval(const EvalArgs& a) {
  dataio::Dataset desired_ds = dataio::load_folder(a.desired, a.size, a.limit);
  std::vector<Tensor> desired = to_images(desired_ds);
  zoo::FeatureEncoder F = zoo::build_feature_extractor();

  std::vector<metrics::MetricRow> rows;
  json inputs{{"desired", a.desired}};
  for (const auto& cand : a.candidates) {
    const auto eq = cand.find('=');
    if (eq == std::string::npos) throw ConfigError("eval: candidate must be label=dir: " + cand);
    const std::string label = cand.substr(0, eq), dir = cand.substr(eq + 1);
    dataio::Dataset cds = dataio::load_folder(dir, a.size, a.limit);
    if (cds.size() != desired_ds.size())
      throw ConfigError("eval: candidate " + label + " has " + std::to_string(cds.size()) +
                        " images, desired has " + std::to_string(desired_ds.size()));
    rows.push_back(eval_row("pgd", label, "toy", "standard", to_images(cds), desired, a.tau,
                            a.with_fid ? &F : nullptr));
    inputs[label] = dir;
  }
  metrics::write_report(rows, a.out);
  write_manifest(fs::path(a.out).parent_path().empty() ? "." : fs::path(a.out).parent_path().string(),
                 "eval",
                 json{{"desired", a.desired}, {"candidates", a.candidates}, {"tau", a.tau},
                      {"size", a.size}, {"limit", a.limit}, {"fid", a.with_fid}},
                 inputs, json{{"report_csv", a.out + ".csv"}, {"report_md", a.out + ".md"}});
  std::cout << metrics::report_markdown(rows);
  return 0;
}

int cmd_patch_export(const std::string& in, const std::string& out) {
  surgery::LoraPatch p = patchio::load_patch(in);  // full verification
  patchio::save_patch(p, out);
  std::cout << "exported " << in << " -> " << out << " (checksum verified)\n";
  return 0;
}

int cmd_patch_import(const std::string& in) {
  surgery::LoraPatch p = patchio::load_patch(in);
  std::size_t floats = 0;
  for (const auto& b : p.blocks) floats += b.a.size() + b.b.size();
  std::cout << "patch " << in << ": mode=" << p.manifest.mode << " rank=" << p.manifest.rank
            << " alpha=" << p.manifest.alpha << " layers=" << p.blocks.size()
            << " tensors=" << floats << " floats\n"
            << "base_model_checksum=" << p.manifest.base_model_checksum << "\n"
            << "config_hash=" << p.manifest.config_hash << "\n";
  return 0;
}

struct ReproArgs {
  std::string out;
  int n = 200, size = 64;
  unsigned seed = 1;
  int gen_epochs = 30, patch_epochs = 1;
  double tau = 0.05;
};

// One-shot desk-scale pipeline producing the headline comparison table:
// synth-data -> train-gen -> protect -> patch-train -> forge -> eval.
int cmd_repro(const ReproArgs& a) {
  const fs::path root(a.out);
  fs::create_directories(root);

  SynthArgs synth;
  synth.n = a.n;
  synth.size = a.size;
  synth.seed = a.seed;
  synth.out = (root / "data").string();
  cmd_synth(synth);

  TrainGenArgs tg;
  tg.data = synth.out;
  tg.out = (root / "model.lpt").string();
  tg.size = a.size;
  tg.epochs = a.gen_epochs;
  cmd_train_gen(tg);

  // Held-out images are the evaluation set: same split as train-gen.
  dataio::Dataset ds = dataio::load_folder(synth.out, a.size);
  auto [train, heldout] = dataio::split(ds, {0.8, 0.2}, tg.split_seed);
  dataio::save_dataset_png(train, (root / "train").string(), "repro train split");
  dataio::save_dataset_png(heldout, (root / "heldout").string(), "repro heldout split");

  ProtectArgs pr;
  pr.model = tg.out;
  pr.data = (root / "heldout").string();
  pr.out = (root / "protected").string();
  pr.size = a.size;
  cmd_protect(pr);

  PatchTrainArgs pt;
  pt.model = tg.out;
  pt.data = (root / "train").string();
  pt.out = (root / "patch.lpt").string();
  pt.size = a.size;
  pt.epochs = a.patch_epochs;
  if (int rc = cmd_patch_train(pt); rc != 0) return rc;

  // Desired outputs: the frozen generator on clean held-out images.
  zoo::Generator gen = patchio::load_generator(tg.out);
  dataio::Dataset held_clean = dataio::load_folder((root / "heldout").string(), a.size);
  dataio::Dataset prot = dataio::load_folder((root / "protected").string(), a.size);
  std::vector<Tensor> desired =
      forward_all([&](const Tensor& x) { return gen.forward(x); }, held_clean);

  surgery::PatchedGenerator patched = surgery::apply_patch(gen, patchio::load_patch(pt.out));
  std::vector<Tensor> out_nobypass =
      forward_all([&](const Tensor& x) { return gen.forward(x); }, prot);
  std::vector<Tensor> out_jpeg = forward_all(
      [&](const Tensor& x) { return gen.forward(finetune::jpeg_baseline(x, 75)); }, prot);
  std::vector<Tensor> out_patch =
      forward_all([&](const Tensor& x) { return patched.forward(x); }, prot);
  std::vector<Tensor> benign_base =
      forward_all([&](const Tensor& x) { return gen.forward(x); }, held_clean);
  std::vector<Tensor> benign_patch =
      forward_all([&](const Tensor& x) { return patched.forward(x); }, held_clean);

  std::vector<metrics::MetricRow> rows;
  rows.push_back(eval_row("pgd", "none", "toy", "standard", out_nobypass, desired, a.tau, nullptr));
  rows.push_back(eval_row("pgd", "jpeg", "toy", "standard", out_jpeg, desired, a.tau, nullptr));
  rows.push_back(eval_row("pgd", "lora_patch", "toy", "standard", out_patch, desired, a.tau, nullptr));
  rows.push_back(
      eval_row("none", "lora_patch", "toy", "benign_impact", benign_patch, benign_base, a.tau, nullptr));
  metrics::write_report(rows, (root / "report").string());

  const int sheet = std::min(8, prot.size());
  std::vector<Tensor> c_in, c_prot, c_nop, c_patch;
  for (int i = 0; i < sheet; ++i) {
    c_in.push_back(held_clean.items[i].image);
    c_prot.push_back(prot.items[i].image);
    c_nop.push_back(out_nobypass[i]);
    c_patch.push_back(out_patch[i]);
  }
  metrics::save_contact_sheet({c_in, c_prot, c_nop, c_patch},
                              (root / "contact_sheet.png").string());

  write_manifest(a.out, "repro",
                 json{{"n", a.n}, {"size", a.size}, {"seed", a.seed},
                      {"gen_epochs", a.gen_epochs}, {"patch_epochs", a.patch_epochs},
                      {"tau", a.tau}},
                 json{{"model_checksum", file_checksum(tg.out)},
                      {"patch_checksum", file_checksum(pt.out)}},
                 json{{"report", (root / "report.csv").string()}});
  std::cout << metrics::report_markdown(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LoRA patching toolkit: adapter surgery, adversarial fine-tuning, evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Generate a synthetic face-like dataset");
  s->add_option("--n", synth.n, "image count");
  s->add_option("--size", synth.size, "image side length");
  s->add_option("--seed", synth.seed, "RNG seed");
  s->add_option("--out", synth.out, "output directory")->required();

  TrainGenArgs tg;
  auto* t = app.add_subcommand("train-gen", "Train the frozen toy generator");
  t->add_option("--data", tg.data)->required();
  t->add_option("--out", tg.out)->required();
  t->add_option("--transform", tg.transform, "channel_permute|hue_shift|attribute_overlay");
  t->add_option("--size", tg.size);
  t->add_option("--limit", tg.limit);
  t->add_option("--epochs", tg.epochs);
  t->add_option("--lr", tg.lr);
  t->add_option("--batch", tg.batch);
  t->add_option("--target-mse", tg.target_mse);
  t->add_option("--base-width", tg.base_width);
  t->add_option("--down", tg.down);
  t->add_option("--res", tg.res);
  t->add_option("--up", tg.up);
  t->add_option("--seed", tg.seed);

  ProtectArgs pr;
  auto* p = app.add_subcommand("protect", "Craft PGD perturbations against a generator");
  p->add_option("--model", pr.model)->required();
  p->add_option("--data", pr.data)->required();
  p->add_option("--out", pr.out)->required();
  p->add_option("--eps", pr.eps);
  p->add_option("--steps", pr.steps);
  p->add_option("--step-size", pr.step_size);
  p->add_option("--scenario", pr.scenario, "standard|leakage");
  p->add_option("--patch", pr.patch, "patch file (leakage scenario)");
  p->add_option("--size", pr.size);
  p->add_option("--limit", pr.limit);

  PatchTrainArgs pt;
  auto* q = app.add_subcommand("patch-train", "Fine-tune a LoRA patch (bypass or defensive)");
  q->add_option("--model", pt.model)->required();
  q->add_option("--data", pt.data)->required();
  q->add_option("--out", pt.out)->required();
  q->add_option("--mode", pt.mode, "bypass|defensive");
  q->add_option("--rank", pt.rank);
  q->add_option("--alpha", pt.alpha);
  q->add_option("--eps", pt.eps);
  q->add_option("--lambda1", pt.lambda1);
  q->add_option("--lambda2", pt.lambda2);
  q->add_option("--lr", pt.lr);
  q->add_option("--batch", pt.batch);
  q->add_option("--epochs", pt.epochs);
  q->add_option("--steps", pt.steps, "inner PGD steps");
  q->add_option("--step-size", pt.step_size, "inner PGD step size");
  q->add_option("--seed", pt.seed);
  q->add_option("--size", pt.size);
  q->add_option("--limit", pt.limit);
  q->add_flag("--no-gating", pt.no_gating, "fix all gates at 1 (ablation)");
  q->add_flag("--no-mmfa", pt.no_mmfa, "drop feature losses (ablation)");
  q->add_flag("--no-adversarial", pt.no_adversarial, "skip the inner maximization (control)");

  ForgeArgs fg;
  auto* f = app.add_subcommand("forge", "Run the (optionally patched) generator on a folder");
  f->add_option("--model", fg.model)->required();
  f->add_option("--data", fg.data)->required();
  f->add_option("--out", fg.out)->required();
  f->add_option("--patch", fg.patch);
  f->add_option("--size", fg.size);
  f->add_option("--limit", fg.limit);
  f->add_option("--sheet-rows", fg.sheet_rows);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score candidate output sets against desired outputs");
  e->add_option("--desired", ev.desired)->required();
  e->add_option("--candidate", ev.candidates, "label=dir (repeatable)")->required();
  e->add_option("--out", ev.out, "report stem (.csv/.md)")->required();
  e->add_option("--tau", ev.tau);
  e->add_option("--size", ev.size);
  e->add_option("--limit", ev.limit);
  e->add_flag("--fid", ev.with_fid, "add toy-FID column");

  auto* pc = app.add_subcommand("patch", "Patch file utilities");
  pc->require_subcommand(1);
  std::string px_in, px_out;
  auto* px = pc->add_subcommand("export", "Verify and re-emit a patch file");
  px->add_option("--in", px_in)->required();
  px->add_option("--out", px_out)->required();
  std::string pi_in;
  auto* pi = pc->add_subcommand("import", "Verify a patch file and print its manifest");
  pi->add_option("--in", pi_in)->required();

  ReproArgs rp;
  auto* r = app.add_subcommand("repro", "Full pipeline: data, generator, defense, patch, report");
  r->add_option("--out", rp.out)->required();
  r->add_option("--n", rp.n);
  r->add_option("--size", rp.size);
  r->add_option("--seed", rp.seed);
  r->add_option("--gen-epochs", rp.gen_epochs);
  r->add_option("--patch-epochs", rp.patch_epochs);
  r->add_option("--tau", rp.tau);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train_gen(tg);
    if (p->parsed()) return cmd_protect(pr);
    if (q->parsed()) return cmd_patch_train(pt);
    if (f->parsed()) return cmd_forge(fg);
    if (e->parsed()) return cmd_eval(ev);
    if (px->parsed()) return cmd_patch_export(px_in, px_out);
    if (pi->parsed()) return cmd_patch_import(pi_in);
    if (r->parsed()) return cmd_repro(rp);
  } catch (const TrainingDivergence& err) {
    std::cerr << "error: training diverged: " << err.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  } catch (const PatchFileError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitIo;
  } catch (const std::exception& err) {  // config/shape/injection/attack
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
