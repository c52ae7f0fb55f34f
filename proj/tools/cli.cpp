#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "yoto/datagen.hpp"
#include "yoto/errors.hpp"
#include "yoto/full_gradcheck.hpp"
#include "yoto/metrics.hpp"
#include "yoto/train.hpp"
#include "yoto/weights.hpp"

namespace yoto::cli {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

ModePair load_pair(const std::string& image, const std::string& ref) {
  Image dis = read_pnm(image);
  return ref.empty() ? ModePair::nr(std::move(dis)) : ModePair::fr(std::move(dis), read_pnm(ref));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << text;
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unified full-reference / no-reference image quality model", "yoto"};
  app.require_subcommand(1);

  std::string data, out_path, weights, mode_name, report, image, ref, split_name = "test";
  std::uint64_t seed = 0;
  std::size_t n_base = 16, epochs = 100, crops = 8;
  TrainConfig tc;
  bool consistency = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic distortion corpus");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--n-base", n_base, "Number of reference images")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generation seed")->required();

  auto* tr = app.add_subcommand("train", "Train a model on the train split");
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--mode", mode_name, "nr, fr or joint")->required();
  tr->add_option("--epochs", epochs, "Epoch count")->required();
  tr->add_option("--seed", seed, "Training seed")->required();
  tr->add_option("--out", out_path, "Weights file to write")->required();
  tr->add_option("--lr", tc.lr0, "Initial learning rate");
  tr->add_option("--batch", tc.batch_size, "Batch size");
  tr->add_option("--tmax", tc.t_max, "Cosine schedule period in epochs");
  tr->add_option("--crop", tc.crop, "Training crop size");

  auto* ev = app.add_subcommand("eval", "Evaluate PLCC/SROCC on a split");
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--weights", weights, "Weights file")->required();
  ev->add_option("--mode", mode_name, "nr or fr")->required();
  ev->add_option("--crops", crops, "Crops per image")->required();
  ev->add_option("--seed", seed, "Crop seed")->required();
  ev->add_option("--report", report, "JSON report to write")->required();
  ev->add_flag("--consistency", consistency, "Also report the FR/NR mean squared difference");
  ev->add_option("--split", split_name, "train or test (default test)");

  auto* sc = app.add_subcommand("score", "Score one image (FR when --ref is given)");
  sc->add_option("--image", image, "Distorted image (PPM)")->required();
  sc->add_option("--ref", ref, "Reference image (PPM)");
  sc->add_option("--weights", weights, "Weights file")->required();

  auto* gc = app.add_subcommand("grad-check", "Full-model finite-difference gradient check");
  gc->add_option("--seed", seed, "Model and data seed");

  auto* dm = app.add_subcommand("dump-maps", "Write feature heatmaps as PGM");
  dm->add_option("--image", image, "Distorted image (PPM)")->required();
  dm->add_option("--ref", ref, "Reference image (PPM)");
  dm->add_option("--weights", weights, "Weights file")->required();
  dm->add_option("--out", out_path, "Output directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    error_line(err, "usage", e.what());
    return kExitContract;
  }

  try {
    if (*gen) {
      const DatasetManifest m = build_dataset(out_path, n_base, seed);
      err << "wrote " << m.rows.size() << " samples (" << m.count(Split::train) << " train, " << m.count(Split::test)
          << " test) to " << out_path << '\n';
      out << m.rows.size() << '\n';
    } else if (*tr) {
      tc.mode = parse_train_mode(mode_name);
      tc.epochs = epochs;
      tc.seed = seed;
      const Dataset ds = load_dataset(read_manifest(data));
      const TrainResult r = train(ds.train, tc, {}, [&](const EpochLog& e) {
        err << "epoch " << e.epoch + 1 << " lr " << e.lr << " loss " << fixed6(e.loss) << '\n';
      });
      save_model(r.model, out_path);
      out << fixed6(r.log.empty() ? 0.0 : r.log.back().loss) << '\n';
    } else if (*ev) {
      EvalOptions opt;
      opt.mode = parse_mode(mode_name);
      opt.crops = crops;
      opt.seed = seed;
      opt.consistency = consistency;
      if (split_name != "train" && split_name != "test") throw ContractError("--split must be train or test");
      const Model model = load_model(weights);
      const Dataset ds = load_dataset(read_manifest(data));
      const MetricsReport r = evaluate(ds.split(split_name == "train" ? Split::train : Split::test), model, opt);
      const std::string json = report_json(r);
      write_text(report, json);
      out << json;
    } else if (*sc) {
      const Model model = load_model(weights);
      out << fixed6(score(model, load_pair(image, ref))) << '\n';
    } else if (*gc) {
      const FullGradCheckResult r =
          run_full_model_grad_check(seed, [&](const std::string& line) { err << line << '\n'; });
      err << r.elements << " parameters in " << r.tensors << " tensors checked in " << r.seconds << " s; worst "
          << r.worst_param << '\n';
      out << r.max_relative_error << '\n';
      return r.passed ? kExitOk : kExitContract;
    } else if (*dm) {
      const Model model = load_model(weights);
      for (const auto& p : dump_feature_maps(model, load_pair(image, ref), out_path)) out << p.string() << '\n';
    }
    return kExitOk;
  } catch (const IoError& e) {
    error_line(err, "io", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    error_line(err, "format", e.what());
    return kExitContract;
  } catch (const ContractError& e) {
    error_line(err, "contract", e.what());
    return kExitContract;
  }
}

}  // namespace yoto::cli
