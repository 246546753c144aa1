#include <filesystem>
#include <iostream>
#include <sstream>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "chrono/run_config.hpp"
#include "chrono/synthesis.hpp"
#include "chrono/trainer.hpp"
#include "chrono/upsampler.hpp"

namespace fs = std::filesystem;
using namespace chrono;

namespace {

// Exit classes: 0 success, 2 usage/config, 3 data/IO, 4 runtime.
int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ModeMismatch:
    case ErrorCode::ConfigMismatch:
      return 2;
    case ErrorCode::ManifestParse:
    case ErrorCode::EmptyDataset:
    case ErrorCode::InsufficientFrames:
    case ErrorCode::EmptySet:
    case ErrorCode::DomainError:
    case ErrorCode::IoError:
    case ErrorCode::OutputExists:
    case ErrorCode::WeightsLoad:
    case ErrorCode::CorruptCheckpoint:
      return 3;
    case ErrorCode::ShapeError:
    case ErrorCode::Nonconvergence:
    case ErrorCode::NonfiniteLoss:
      return 4;
  }
  return 4;
}

void apply_log_level(const std::string& level) {
  if (level.empty()) return;
  if (level == "error") set_log_level(LogLevel::Error);
  else if (level == "warn") set_log_level(LogLevel::Warn);
  else if (level == "info") set_log_level(LogLevel::Info);
  else if (level == "debug") set_log_level(LogLevel::Debug);
  else fail(ErrorCode::InvalidArgument, "log level must be error|warn|info|debug");
}

std::vector<double> parse_timestamp_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "bad timestamp: " + item);
    }
  }
  if (out.empty()) fail(ErrorCode::InvalidArgument, "empty timestamp list");
  return out;
}

struct TrainCli {
  std::string config_path;
  std::string dataset;
  std::string unlabeled;
  std::string out_dir;
  bool resume = false;
  int threads = 0;
  // overrides (only applied when the flag was passed)
  std::string mode, time_encoding, pretrained_encoder;
  int64_t iterations = 0, checkpoint_every = 0, log_every = 0;
  int batch_size = 0, frames_per_example = 0, image_size = 0, resize_size = 0;
  int d_z = 0, base_channels = 0, res_blocks = 0, encoder_stages = 0;
  int disc_base_channels = 0, cond_embed_dim = 0, negative_pairs = 0, workers = 0;
  double learning_rate = 0, lambda_rec = 0;
  uint64_t seed = 0;
  bool literal_paper_loss = false, aligned_reconstruction = false;
};

int cmd_train(CLI::App* app, const TrainCli& cli) {
  RunConfig run;
  if (!cli.config_path.empty()) run = RunConfig::from_file(cli.config_path);

  auto passed = [app](const std::string& flag) { return app->count(flag) > 0; };
  auto& t = run.train;
  if (passed("--mode")) t.mode = nets::bundle_mode_from_name(cli.mode);
  if (passed("--iterations")) t.iterations = cli.iterations;
  if (passed("--batch-size")) t.batch_size = cli.batch_size;
  if (passed("--frames-per-example")) t.frames_per_example = cli.frames_per_example;
  if (passed("--learning-rate")) t.learning_rate = cli.learning_rate;
  if (passed("--lambda-rec")) t.lambda_rec = cli.lambda_rec;
  if (passed("--image-size")) t.image_size = cli.image_size;
  if (passed("--resize-size")) t.resize_size = cli.resize_size;
  if (passed("--seed")) t.seed = cli.seed;
  if (passed("--d-z")) t.d_z = cli.d_z;
  if (passed("--base-channels")) t.base_channels = cli.base_channels;
  if (passed("--res-blocks")) t.res_blocks = cli.res_blocks;
  if (passed("--encoder-stages")) t.encoder_stages = cli.encoder_stages;
  if (passed("--disc-base-channels")) t.disc_base_channels = cli.disc_base_channels;
  if (passed("--cond-embed-dim")) t.cond_embed_dim = cli.cond_embed_dim;
  if (passed("--checkpoint-every")) t.checkpoint_every = cli.checkpoint_every;
  if (passed("--log-every")) t.log_every = cli.log_every;
  if (passed("--workers")) t.workers = cli.workers;
  if (passed("--negative-pairs")) t.negative_pairs = cli.negative_pairs;
  if (passed("--literal-paper-loss")) t.literal_paper_loss = cli.literal_paper_loss;
  if (passed("--aligned-reconstruction")) t.aligned_reconstruction = cli.aligned_reconstruction;
  if (passed("--pretrained-encoder")) t.pretrained_encoder = cli.pretrained_encoder;
  if (passed("--time-encoding")) {
    if (cli.time_encoding == "raw") t.time_encoding = nets::TimeEncodingMode::Raw;
    else if (cli.time_encoding == "cyclic") t.time_encoding = nets::TimeEncodingMode::Cyclic;
    else fail(ErrorCode::InvalidArgument, "time encoding must be raw|cyclic");
  }
  if (passed("--dataset")) run.labeled_manifest = cli.dataset;
  if (passed("--unlabeled")) run.unlabeled_manifest = cli.unlabeled;
  if (passed("--out")) run.output_dir = cli.out_dir;
  apply_log_level(run.log_level);
  if (cli.threads > 0) torch::set_num_threads(cli.threads);

  if (run.labeled_manifest.empty()) {
    fail(ErrorCode::InvalidArgument, "MANIFEST: no labeled dataset given (--dataset)");
  }
  // A manifest path may name the file itself or a directory holding one.
  auto resolve_manifest = [](std::string path) {
    if (fs::is_directory(path)) path = (fs::path(path) / "manifest.json").string();
    if (!fs::exists(path)) {
      fail(ErrorCode::InvalidArgument, "MANIFEST: dataset path missing: " + path);
    }
    return path;
  };
  const std::string labeled_path = resolve_manifest(run.labeled_manifest);
  if (t.mode == nets::BundleMode::MultiDomain && run.unlabeled_manifest.empty()) {
    fail(ErrorCode::ModeMismatch, "multidomain training needs --unlabeled");
  }
  t.validate();

  DatasetIndex labeled = load_manifest(labeled_path, DomainTag::Labeled);
  std::optional<DatasetIndex> unlabeled;
  if (!run.unlabeled_manifest.empty()) {
    unlabeled = load_manifest(resolve_manifest(run.unlabeled_manifest), DomainTag::Unlabeled);
  }

  auto result = trainer::train(t, labeled, unlabeled ? &*unlabeled : nullptr, run.output_dir,
                               cli.resume);
  std::cout << "final checkpoint: " << result.checkpoint_path << " (iteration "
            << result.final_iteration << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-lapse synthesis toolkit: conditional GAN training, inference and guided upsampling"};
  app.require_subcommand(1);

  // ---- train ----
  TrainCli tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model on timestamped sequence data");
  train_cmd->add_option("--config", tr.config_path, "JSON run config (flags override it)");
  train_cmd->add_option("--dataset", tr.dataset, "labeled dataset manifest (file or directory)");
  train_cmd->add_option("--unlabeled", tr.unlabeled, "unlabeled dataset manifest");
  train_cmd->add_option("--out", tr.out_dir, "output directory");
  train_cmd->add_flag("--resume", tr.resume, "resume from <out>/checkpoint.ckpt");
  train_cmd->add_option("--threads", tr.threads, "torch intra-op threads (0 = library default)");
  train_cmd->add_option("--mode", tr.mode, "vanilla|multiframe|multidomain");
  train_cmd->add_option("--iterations", tr.iterations);
  train_cmd->add_option("--batch-size", tr.batch_size);
  train_cmd->add_option("--frames-per-example", tr.frames_per_example);
  train_cmd->add_option("--learning-rate", tr.learning_rate);
  train_cmd->add_option("--lambda-rec", tr.lambda_rec);
  train_cmd->add_option("--image-size", tr.image_size);
  train_cmd->add_option("--resize-size", tr.resize_size);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--d-z", tr.d_z);
  train_cmd->add_option("--base-channels", tr.base_channels);
  train_cmd->add_option("--res-blocks", tr.res_blocks);
  train_cmd->add_option("--encoder-stages", tr.encoder_stages);
  train_cmd->add_option("--disc-base-channels", tr.disc_base_channels);
  train_cmd->add_option("--cond-embed-dim", tr.cond_embed_dim);
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every);
  train_cmd->add_option("--log-every", tr.log_every);
  train_cmd->add_option("--workers", tr.workers, "0 = serial profile, 1 = prefetch thread");
  train_cmd->add_option("--negative-pairs", tr.negative_pairs, "per set (0 = frames per example)");
  train_cmd->add_option("--time-encoding", tr.time_encoding, "raw|cyclic");
  train_cmd->add_flag("--literal-paper-loss", tr.literal_paper_loss);
  train_cmd->add_flag("--aligned-reconstruction", tr.aligned_reconstruction);
  train_cmd->add_option("--pretrained-encoder", tr.pretrained_encoder, "encoder weight archive");

  // ---- synthesize ----
  synthesis::SynthesisRequest req;
  std::string synth_out = "synth_out", timestamps_csv;
  bool no_upsample = false, force = false, contact_sheet = false;
  auto* synth_cmd = app.add_subcommand("synthesize", "Generate a day-long sequence from one image");
  synth_cmd->add_option("--image", req.image_path, "input image")->required();
  synth_cmd->add_option("--checkpoint", req.checkpoint_path, "trained checkpoint")->required();
  synth_cmd->add_option("--frames", req.frame_count, "number of frames");
  synth_cmd->add_option("--timestamps", timestamps_csv, "explicit comma-separated day fractions");
  synth_cmd->add_option("--t-start", req.t_start, "schedule start (wraps past midnight)");
  synth_cmd->add_option("--t-end", req.t_end, "schedule end (exclusive)");
  synth_cmd->add_option("--seed", req.latent_seed, "latent seed");
  synth_cmd->add_option("--network-size", req.network_size,
                        "generator grid (-1 = training crop, 0 = native resolution)");
  synth_cmd->add_flag("--no-upsample", no_upsample, "emit raw low-resolution frames");
  synth_cmd->add_option("--beta", req.upsample_config.beta, "guided upsampling smoothness");
  synth_cmd->add_option("--out", synth_out, "output directory");
  synth_cmd->add_flag("--force", force, "overwrite an existing output sequence");
  synth_cmd->add_flag("--contact-sheet", contact_sheet, "also write a horizontal strip");

  // ---- upsample ----
  std::string ups_input, ups_guide, ups_out, ups_solver = "cg", dump_fields;
  UpsampleConfig ups_cfg;
  auto* ups_cmd = app.add_subcommand("upsample", "Guided upsampling of a recolored low-res guide");
  ups_cmd->add_option("--input", ups_input, "full-resolution input image")->required();
  ups_cmd->add_option("--guide", ups_guide, "low-resolution recolored guide")->required();
  ups_cmd->add_option("--beta", ups_cfg.beta, "smoothness weight");
  ups_cmd->add_option("--eps-w", ups_cfg.eps_w, "neighbor weight floor");
  ups_cmd->add_option("--eps-ridge", ups_cfg.eps_ridge, "identity anchoring weight");
  ups_cmd->add_option("--solver", ups_solver, "cg|dense");
  ups_cmd->add_option("--cg-tol", ups_cfg.cg_tol);
  ups_cmd->add_option("--cg-max-iters", ups_cfg.cg_max_iters);
  ups_cmd->add_option("--out", ups_out, "output image")->required();
  ups_cmd->add_option("--dump-fields", dump_fields,
                      "prefix for float TIFF dumps of the scale/offset fields");

  // ---- make-synthetic ----
  SyntheticConfig syn;
  std::string syn_out = "toy_corpus", syn_domain = "labeled";
  uint64_t syn_seed = 7;
  auto* mk_cmd = app.add_subcommand("make-synthetic", "Generate the synthetic tone-curve corpus");
  mk_cmd->add_option("--out", syn_out, "corpus directory")->required();
  mk_cmd->add_option("--sequences", syn.num_sequences, "number of sequences");
  mk_cmd->add_option("--frames", syn.frames_per_seq, "frames per sequence");
  mk_cmd->add_option("--size", syn.size, "image size in pixels");
  mk_cmd->add_option("--seed", syn_seed);
  mk_cmd->add_option("--domain", syn_domain, "labeled|unlabeled");
  mk_cmd->add_option("--amplitude-lo", syn.amplitude_lo);
  mk_cmd->add_option("--amplitude-hi", syn.amplitude_hi);
  mk_cmd->add_option("--phase-lo", syn.phase_lo);
  mk_cmd->add_option("--phase-hi", syn.phase_hi);

  // ---- inspect ----
  std::string inspect_path;
  bool inspect_json = false;
  auto* ins_cmd = app.add_subcommand("inspect", "Print checkpoint metadata");
  ins_cmd->add_option("checkpoint", inspect_path, "checkpoint file")->required();
  ins_cmd->add_flag("--json", inspect_json, "compact JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_cmd, tr);

    if (synth_cmd->parsed()) {
      if (!timestamps_csv.empty()) req.timestamps = parse_timestamp_list(timestamps_csv);
      if (req.timestamps.empty() && req.frame_count < 1) {
        fail(ErrorCode::InvalidArgument, "need --frames or --timestamps");
      }
      req.upsample = !no_upsample;
      auto seq = synthesis::synthesize(req);
      auto manifest = synthesis::write_sequence(seq, synth_out, force, contact_sheet);
      std::cout << "wrote " << seq.frames.size() << " frames, manifest " << manifest << "\n";
      return 0;
    }

    if (ups_cmd->parsed()) {
      if (ups_solver == "dense") ups_cfg.solver = UpsampleConfig::Solver::Dense;
      else if (ups_solver != "cg") fail(ErrorCode::InvalidArgument, "solver must be cg|dense");
      ImageGrid input = load_image(ups_input);
      ImageGrid guide = load_image(ups_guide);
      if (dump_fields.empty()) {
        save_image(ups_out, guided_upsample(input, guide, ups_cfg));
      } else {
        ImageGrid low = resize_area(input, guide.height, guide.width);
        TransformField field = solve_transform(low, guide, ups_cfg);
        save_image(ups_out, apply_transform(input, field));
        ImageGrid scale(field.height, field.width, 3), offset(field.height, field.width, 3);
        scale.values.assign(field.scale.begin(), field.scale.end());
        offset.values.assign(field.offset.begin(), field.offset.end());
        save_float_image(dump_fields + "_scale.tiff", scale);
        save_float_image(dump_fields + "_offset.tiff", offset);
      }
      std::cout << "wrote " << ups_out << "\n";
      return 0;
    }

    if (mk_cmd->parsed()) {
      syn.domain = syn_domain == "unlabeled" ? DomainTag::Unlabeled : DomainTag::Labeled;
      Rng rng(syn_seed);
      auto index = generate_synthetic_corpus(syn_out, syn, rng);
      std::cout << nlohmann::json{{"sequences", index.stats.num_sequences},
                                  {"frames", index.stats.num_frames},
                                  {"manifest", (fs::path(syn_out) / "manifest.json").string()}}
                       .dump()
                << "\n";
      return 0;
    }

    if (ins_cmd->parsed()) {
      auto info = trainer::inspect_checkpoint(inspect_path);
      std::cout << (inspect_json ? info.dump() : info.dump(2)) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}
