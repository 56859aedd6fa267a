#include "esci/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "esci/analysis.hpp"
#include "esci/gaptv.hpp"
#include "esci/io.hpp"
#include "esci/train.hpp"

namespace esci::cli {

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) parts.push_back(item);
  return parts;
}

struct EncodeArgs {
  std::string video, masks, gen_masks, color = "gray", out, masks_out;
  double noise = 0.0;
  std::uint64_t noise_seed = 0;
};

int cmd_encode(const EncodeArgs& a, std::ostream& out) {
  VideoCube<float> video = load_video(a.video);
  if (a.masks.empty() == a.gen_masks.empty()) throw UsageError("give exactly one of --masks or --gen-masks");
  MaskSet<float> masks;
  if (!a.masks.empty()) {
    masks = load_masks(a.masks);
  } else {
    const auto p = split_csv(a.gen_masks);
    if (p.size() != 3) throw UsageError("--gen-masks expects B,density,seed");
    std::size_t b = 0;
    double density = 0;
    std::uint64_t seed = 0;
    try {
      b = std::stoull(p[0]);
      density = std::stod(p[1]);
      seed = std::stoull(p[2]);
    } catch (const std::exception&) {
      throw UsageError("--gen-masks expects B,density,seed, got '" + a.gen_masks + "'");
    }
    if (b != video.count())
      throw ShapeError("--gen-masks requests " + std::to_string(b) + " frames but the video has " +
                       std::to_string(video.count()));
    if (density < 0 || density > 1) throw UsageError("mask density must lie in [0, 1]");
    masks = generate_masks<float>(b, video.height(), video.width(), density, seed);
  }
  if (a.color == "gray" && video.channels() != 1)
    throw ShapeError("--color gray needs a one-channel video; got " + std::to_string(video.channels()) + " channels");

  Measurement<float> m = encode(video, masks, a.noise, a.noise_seed);
  if (a.color == "bayer") {
    if (video.height() % 2 || video.width() % 2) throw ShapeError("Bayer data needs even height and width");
    m.color = ColorMode::BayerRggb;  // one-channel input is taken as an already mosaicked raw video
  }
  save_measurement(a.out, m);
  if (!a.masks_out.empty()) save_container(a.masks_out, Container::from_tensor(masks.masks));
  out << "measurement " << shape_str(m.y.dims()) << " from " << m.frames << " frames (" << a.color
      << "), noise sigma " << a.noise << " -> " << a.out << '\n';
  return kExitOk;
}

struct ReconstructArgs {
  std::string measurement, masks, method = "net", checkpoint, variant, out, export_dir;
  std::size_t iters = 50;
  double tv_weight = GapTvOptions{}.tv_weight;
};

int cmd_reconstruct(const ReconstructArgs& a, std::ostream& out) {
  const Measurement<float> m = load_measurement(a.measurement);
  const MaskSet<float> masks = load_masks(a.masks);
  NoGradScope<float> no_grad;
  VideoCube<float> result;
  if (a.method == "net") {
    if (a.checkpoint.empty()) throw UsageError("--method net requires --checkpoint");
    const EfficientSci<float> net = load_checkpoint<float>(a.checkpoint);
    if (!a.variant.empty()) {
      const NetworkConfig want = NetworkConfig::variant(a.variant);
      if (want.channels != net.config().channels || want.blocks != net.config().blocks)
        throw UsageError("checkpoint is not variant " + a.variant + " (C=" + std::to_string(net.config().channels) +
                         ", N=" + std::to_string(net.config().blocks) + ")");
    }
    if (net.config().color() != (m.color == ColorMode::BayerRggb))
      throw UsageError("checkpoint and measurement disagree on color mode");
    result = net.reconstruct(m, masks);
  } else if (a.method == "gaptv") {
    result = gap_tv_reconstruct(m, masks, GapTvOptions{a.iters, a.tv_weight, GapTvOptions{}.tv_inner_iters});
  } else {
    const Tensor<float> x_e = estimation_init(m, masks);
    result.frames = m.color == ColorMode::Gray ? x_e : bayer_planes_to_rgb(x_e);
  }
  check_finite<float>(result.frames.data(), "reconstruction");
  save_container(a.out, Container::from_tensor(result.frames));
  out << a.method << " reconstruction " << shape_str(result.frames.dims()) << " -> " << a.out << '\n';
  if (!a.export_dir.empty()) {
    const auto paths = export_frames(result, a.export_dir);
    out << "exported " << paths.size() << " frames to " << a.export_dir << '\n';
  }
  return kExitOk;
}

struct TrainArgs {
  std::string config, checkpoint, loss_csv;
  std::size_t log_every = 50;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto kv = parse_key_values(read_file(a.config));
  const TrainConfig tc = train_config_from(kv);
  const NetworkConfig nc = network_config_from(kv);
  out << "training C=" << nc.channels << " N=" << nc.blocks << " S=" << nc.split << " heads=" << nc.heads << " on "
      << tc.dataset_size << " synthetic videos, " << tc.epochs_phase1 << "+" << tc.epochs_phase2 << " epochs\n";
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(tc, nc, [&](const LossRecord& rec) {
    if (a.log_every > 0 && rec.step % a.log_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out << "step " << rec.step << " epoch " << rec.epoch << " lr " << rec.lr << " loss " << rec.loss << " ("
          << std::fixed << std::setprecision(1) << secs << "s)" << std::defaultfloat << std::setprecision(6) << '\n';
    }
  });
  save_checkpoint(a.checkpoint, r.net);
  const std::string csv = a.loss_csv.empty() ? a.checkpoint + ".loss.csv" : a.loss_csv;
  write_file(csv, loss_history_csv(r.history));
  out << r.history.size() << " steps";
  if (!r.epoch_loss.empty()) out << ", final epoch loss " << r.epoch_loss.back();
  out << "\ncheckpoint -> " << a.checkpoint << "\nloss history -> " << csv << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string pred, truth, csv;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const VideoCube<float> pred = load_video(a.pred), truth = load_video(a.truth);
  const MetricReport p = psnr(pred, truth), s = ssim(pred, truth);
  out << metrics_table_text(p, s);
  if (!a.csv.empty()) write_file(a.csv, metrics_table_csv(p, s));
  return kExitOk;
}

struct ComplexityArgs {
  std::string variant = "T", shape = "8,256,256";
  std::size_t ffn_expansion = NetworkConfig{}.ffn_expansion;
};

int cmd_complexity(const ComplexityArgs& a, std::ostream& out) {
  NetworkConfig c = NetworkConfig::variant(a.variant);
  c.ffn_expansion = a.ffn_expansion;
  c.validate();
  const auto dims = split_csv(a.shape);
  if (dims.size() != 3) throw UsageError("--shape expects T,H,W");
  std::size_t t = 0, h = 0, w = 0;
  try {
    t = std::stoull(dims[0]);
    h = std::stoull(dims[1]);
    w = std::stoull(dims[2]);
  } catch (const std::exception&) {
    throw UsageError("--shape expects T,H,W, got '" + a.shape + "'");
  }
  if (t == 0 || h == 0 || w == 0 || h % 2 || w % 2) throw ShapeError("--shape needs positive T and even H, W");

  const ParamCount pc = param_count(c);
  std::uint64_t fe = 0, blocks = 0, head = 0;
  for (const auto& l : pc.layers) (l.name.starts_with("fe.") ? fe : l.name.starts_with("head.") ? head : blocks) += l.params;
  const FlopsBreakdown f = network_flops(c, t, h, w);

  out << "variant " << a.variant << ": C=" << c.channels << " N=" << c.blocks << " S=" << c.split
      << " heads=" << c.heads << " ffn x" << c.ffn_expansion << ", input " << t << "x" << h << "x" << w << "\n\n";
  out << std::left << std::setw(22) << "component" << std::right << std::setw(14) << "params" << std::setw(20)
      << "multiplies" << '\n';
  auto row = [&](const std::string& name, std::uint64_t params, double flops) {
    out << std::left << std::setw(22) << name << std::right << std::setw(14) << params << std::setw(20) << std::fixed
        << std::setprecision(0) << flops << std::defaultfloat << '\n';
  };
  row("feature extraction", fe, f.features);
  row("ResDNet blocks", blocks, f.blocks);
  row("reconstruction head", head, f.head);
  row("total", pc.total, f.total());
  out << std::setprecision(4) << "\ntotal: " << static_cast<double>(pc.total) / 1e6 << " M params, "
      << f.total() / 1e9 << " G multiplies\n";

  const double bh = static_cast<double>(h) / 2, bw = static_cast<double>(w) / 2, bt = static_cast<double>(t);
  const double cc = static_cast<double>(c.channels);
  out << "\nper-layer closed forms at the block resolution (" << bh << "x" << bw << "x" << bt << ", C=" << cc
      << ", K=3):\n";
  for (Component comp : {Component::Scb, Component::Tsab, Component::Scb3d, Component::GMsa, Component::TsMsa})
    out << std::left << std::setw(10) << to_string(comp) << std::right << std::setw(22) << std::setprecision(6)
        << flops_analytic(comp, bh, bw, bt, cc) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EfficientSCI video snapshot compressive imaging toolkit"};
  app.require_subcommand(1);

  EncodeArgs enc;
  auto* encode_cmd = app.add_subcommand("encode", "Simulate a coded snapshot from a video");
  encode_cmd->add_option("--video", enc.video, "Video container [B,H,W] or [B,C,H,W]")->required();
  encode_cmd->add_option("--masks", enc.masks, "Mask container [B,H,W]");
  encode_cmd->add_option("--gen-masks", enc.gen_masks, "Generate Bernoulli masks: B,density,seed");
  encode_cmd->add_option("--noise", enc.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  encode_cmd->add_option("--noise-seed", enc.noise_seed, "Noise seed");
  encode_cmd->add_option("--color", enc.color, "gray or bayer")->check(CLI::IsMember({"gray", "bayer"}));
  encode_cmd->add_option("--out", enc.out, "Measurement output path")->required();
  encode_cmd->add_option("--masks-out", enc.masks_out, "Also write the masks used");

  ReconstructArgs rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Recover a video from a measurement");
  rec_cmd->add_option("--measurement", rec.measurement)->required();
  rec_cmd->add_option("--masks", rec.masks)->required();
  rec_cmd->add_option("--method", rec.method)->check(CLI::IsMember({"net", "gaptv", "init"}));
  rec_cmd->add_option("--checkpoint", rec.checkpoint);
  rec_cmd->add_option("--variant", rec.variant)->check(CLI::IsMember({"T", "S", "B", "L"}));
  rec_cmd->add_option("--iters", rec.iters, "GAP-TV iterations");
  rec_cmd->add_option("--tv-weight", rec.tv_weight, "GAP-TV denoiser weight")->check(CLI::NonNegativeNumber);
  rec_cmd->add_option("--out", rec.out)->required();
  rec_cmd->add_option("--export-ppm", rec.export_dir, "Write frames as PGM/PPM into this directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train on synthetic moving-shape videos");
  train_cmd->add_option("--config", tr.config, "key = value configuration file")->required();
  train_cmd->add_option("--out-checkpoint", tr.checkpoint)->required();
  train_cmd->add_option("--loss-csv", tr.loss_csv, "Loss history path (default: <checkpoint>.loss.csv)");
  train_cmd->add_option("--log-every", tr.log_every, "Progress line interval in steps (0: silent)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR and SSIM of a prediction against ground truth");
  eval_cmd->add_option("--pred", ev.pred)->required();
  eval_cmd->add_option("--truth", ev.truth)->required();
  eval_cmd->add_option("--csv", ev.csv, "Also write the table as CSV");

  ComplexityArgs cx;
  auto* cx_cmd = app.add_subcommand("complexity", "Analytic parameter and multiply counts");
  cx_cmd->add_option("--variant", cx.variant)->check(CLI::IsMember({"T", "S", "B", "L"}));
  cx_cmd->add_option("--shape", cx.shape, "T,H,W");
  cx_cmd->add_option("--ffn-expansion", cx.ffn_expansion);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (encode_cmd->parsed()) return cmd_encode(enc, out);
    if (rec_cmd->parsed()) return cmd_reconstruct(rec, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out);
    return cmd_complexity(cx, out);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace esci::cli
