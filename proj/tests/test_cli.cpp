#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "esci/cli.hpp"
#include "esci/io.hpp"

using namespace esci;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "esci");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("esci_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, EncodeOnesVideoWithOnesMasks) {
  save_container(path("v.bin"), Container::from_tensor(Tensor<float>::full({8, 4, 4}, 1.0f)));
  const auto r = run({"encode", "--video", path("v.bin"), "--gen-masks", "8,1.0,0", "--out", path("y.bin")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = load_measurement(path("y.bin"));
  EXPECT_EQ(m.frames, 8u);
  for (float v : m.y.vec()) EXPECT_EQ(v, 8.0f);
}

TEST_F(CliTest, GeneratedMasksAreByteIdentical) {
  save_container(path("v.bin"), Container::from_tensor(Tensor<float>::full({4, 6, 6}, 0.5f)));
  for (const char* name : {"m1.bin", "m2.bin"}) {
    const auto r = run({"encode", "--video", path("v.bin"), "--gen-masks", "4,0.5,9", "--out", path("y.bin"),
                        "--masks-out", path(name)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(read_file(path("m1.bin")), read_file(path("m2.bin")));
}

TEST_F(CliTest, EncodeReconstructEvalPipeline) {
  std::vector<float> v(4 * 16 * 16);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float((i / 16 + i % 16) % 7) / 7.0f;
  save_container(path("v.bin"), Container::from_tensor(Tensor<float>({4, 16, 16}, v)));
  ASSERT_EQ(run({"encode", "--video", path("v.bin"), "--gen-masks", "4,0.5,1", "--out", path("y.bin"), "--masks-out",
                 path("m.bin")})
                .code,
            0);
  const auto rec = run({"reconstruct", "--measurement", path("y.bin"), "--masks", path("m.bin"), "--method", "gaptv",
                        "--iters", "10", "--out", path("x.bin"), "--export-ppm", path("frames")});
  ASSERT_EQ(rec.code, 0) << rec.err;
  EXPECT_EQ(load_video(path("x.bin")).frames.dims(), (Shape{4, 1, 16, 16}));
  EXPECT_TRUE(fs::exists(path("frames/frame_003.pgm")));

  const auto ev = run({"eval", "--pred", path("x.bin"), "--truth", path("v.bin"), "--csv", path("m.csv")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const std::string csv = read_file(path("m.csv"));
  EXPECT_EQ(csv.rfind("frame,psnr,ssim\n", 0), 0u);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
}

TEST_F(CliTest, TrainThenReconstructWithNetwork) {
  write_file(path("cfg.txt"),
             "channels = 8\nblocks = 1\nsplit = 2\nheads = 1\nepochs_phase1 = 1\nepochs_phase2 = 0\n"
             "dataset_size = 2\nbatch_size = 1\ncrop_size = 16\nsource_size = 20\nframes = 4\n");
  const auto tr = run({"train", "--config", path("cfg.txt"), "--out-checkpoint", path("net.bin"), "--log-every", "0"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_EQ(read_file(path("net.bin.loss.csv")).rfind("step,epoch,lr,loss\n", 0), 0u);

  save_container(path("v.bin"), Container::from_tensor(Tensor<float>::full({4, 16, 16}, 0.5f)));
  ASSERT_EQ(run({"encode", "--video", path("v.bin"), "--gen-masks", "4,0.5,1", "--out", path("y.bin"), "--masks-out",
                 path("m.bin")})
                .code,
            0);
  const auto rec = run({"reconstruct", "--measurement", path("y.bin"), "--masks", path("m.bin"), "--checkpoint",
                        path("net.bin"), "--out", path("x.bin")});
  ASSERT_EQ(rec.code, 0) << rec.err;
  EXPECT_EQ(load_video(path("x.bin")).frames.dims(), (Shape{4, 1, 16, 16}));
}

TEST_F(CliTest, ErrorsMapToExitCodes) {
  save_container(path("v.bin"), Container::from_tensor(Tensor<float>::full({4, 8, 8}, 0.5f)));
  run({"encode", "--video", path("v.bin"), "--gen-masks", "4,0.5,1", "--out", path("y.bin"), "--masks-out",
       path("m.bin")});

  const auto missing = run({"reconstruct", "--measurement", path("y.bin"), "--masks", path("m.bin"), "--checkpoint",
                            path("nope.bin"), "--out", path("x.bin")});
  EXPECT_EQ(missing.code, cli::kExitUsage);
  EXPECT_NE(missing.err.find("nope.bin"), std::string::npos);

  EXPECT_EQ(run({"encode", "--video", path("v.bin"), "--gen-masks", "3,0.5,1", "--out", path("y.bin")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"encode", "--video", path("v.bin")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"complexity", "--shape", "8,255,256"}).code, cli::kExitUsage);

  write_file(path("bad.txt"), "channels = 8\nblocks = 1\nsplit = 2\nheads = 1\nbatch_size = 1\ncrop_size = 16\n"
                              "source_size = 20\nframes = 4\ndataset_size = 1\nlr_initial = 1e39\n");
  // A float overflow in the first update surfaces as divergence.
  const auto div = run({"train", "--config", path("bad.txt"), "--out-checkpoint", path("n.bin"), "--log-every", "0"});
  EXPECT_EQ(div.code, cli::kExitNumeric) << div.err;
}

TEST_F(CliTest, ComplexityReport) {
  const auto r = run({"complexity", "--variant", "T", "--shape", "8,256,256"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("variant T"), std::string::npos);
  EXPECT_NE(r.out.find("total:"), std::string::npos);
  for (const char* comp : {"ResDNet blocks", "SCB", "TSAB", "G-MSA"}) EXPECT_NE(r.out.find(comp), std::string::npos) << comp;
}
