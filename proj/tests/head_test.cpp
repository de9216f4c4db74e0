#include <gtest/gtest.h>

#include <cmath>

#include "orca/errors.hpp"
#include "orca/head.hpp"
#include "orca/model.hpp"
#include "test_util.hpp"

namespace orca {
namespace {

using testing::small_schema;

TEST(Variant, NamesAndSwitches) {
  for (auto v : {Variant::kBase, Variant::kFci, Variant::kScd, Variant::kFull}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
    OrcaConfig c;
    apply_variant(c, v);
    EXPECT_EQ(variant_of(c), v);
  }
  OrcaConfig c;
  apply_variant(c, Variant::kBase);
  EXPECT_FALSE(c.nde_active());
  EXPECT_THROW(parse_variant("orca"), ConfigError);
}

TEST(OrcaConfig, Validation) {
  OrcaConfig c;
  c.p_fea = 1.5;
  EXPECT_THROW(c.validate(8), ConfigError);
  c = {};
  c.n_heads = 3;
  EXPECT_THROW(c.validate(8), ConfigError);
  c.attn_dim = 9;
  EXPECT_NO_THROW(c.validate(8));
  auto j = to_json(c);
  j["p_mask"] = 0.1;
  EXPECT_THROW(orca_config_from_json(j), ConfigError);
}

TEST(MaskPostClick, ExtremesAndUntouchedPreClick) {
  const auto schema = small_schema();
  const InteractionRecord r{{2, 3, 4}, true, 5.0, 1};
  auto rng = make_rng(1, "mask");
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(mask_post_click(r, schema, 0.0, rng), r);
    const auto m = mask_post_click(r, schema, 1.0, rng);
    EXPECT_EQ(m.feature_ids, (std::vector<int>{2, 3, kMaskIndex}));
    EXPECT_EQ(m.dwell_bin, r.dwell_bin);
  }
}

TEST(MaskPostClick, RateMatchesProbability) {
  const auto schema = small_schema();
  const InteractionRecord r{{2, 3, 4}, false, std::nullopt, std::nullopt};
  auto rng = make_rng(2, "mask");
  int masked = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) masked += mask_post_click(r, schema, 0.3, rng).feature_ids[2] == kMaskIndex;
  // Binomial sd is about 0.0032.
  EXPECT_NEAR(static_cast<double>(masked) / n, 0.3, 0.02);
}

TEST(MaskPostClick, NoPostClickFieldsIsANoOp) {
  const FeatureSchema schema({{"a", FieldKind::kCategorical, 4, false}});
  const InteractionRecord r{{3}, false, std::nullopt, std::nullopt};
  auto rng = make_rng(3, "mask");
  EXPECT_EQ(mask_post_click(r, schema, 1.0, rng), r);
}

TEST(Debias, Subtracts) {
  const std::vector<double> dt{1.0, 2.0, -1.0}, nde{0.5, -1.0, 0.0};
  EXPECT_EQ(debias(dt, nde), (std::vector<double>{0.5, 3.0, -1.0}));
  EXPECT_THROW(debias(dt, std::vector<double>{1.0}), std::invalid_argument);
}

// Per-instance loop over the two-token sequence.
Matrix attention_loop(CrossAttention& att, const Matrix& ec, const Matrix& et) {
  const int dim = att.dim();
  const int heads = att.heads();
  const Matrix qc = att.query().forward(ec), kc = att.key().forward(ec), vc = att.value().forward(ec);
  const Matrix qt = att.query().forward(et), kt = att.key().forward(et), vt = att.value().forward(et);
  const int a = static_cast<int>(qc.rows());
  const int dh = a / heads;
  Matrix out(2 * dim, ec.cols());
  for (Eigen::Index b = 0; b < ec.cols(); ++b) {
    Eigen::VectorXd oc(a), ot(a);
    for (int h = 0; h < heads; ++h) {
      const Eigen::VectorXd q[2] = {qc.col(b).segment(h * dh, dh), qt.col(b).segment(h * dh, dh)};
      const Eigen::VectorXd k[2] = {kc.col(b).segment(h * dh, dh), kt.col(b).segment(h * dh, dh)};
      const Eigen::VectorXd v[2] = {vc.col(b).segment(h * dh, dh), vt.col(b).segment(h * dh, dh)};
      for (int i = 0; i < 2; ++i) {
        double s[2], z = 0.0;
        for (int j = 0; j < 2; ++j) {
          s[j] = std::exp(q[i].dot(k[j]) / std::sqrt(static_cast<double>(dh)));
          z += s[j];
        }
        Eigen::VectorXd o = (s[0] / z) * v[0] + (s[1] / z) * v[1];
        (i == 0 ? oc : ot).segment(h * dh, dh) = o;
      }
    }
    out.col(b).head(dim) = att.output().forward(oc);
    out.col(b).tail(dim) = att.output().forward(ot);
  }
  return out;
}

TEST(CrossAttention, MatchesLoopOracle) {
  for (int heads : {1, 2, 4}) {
    CrossAttention att(4, 8, heads);
    auto rng = make_rng(heads, "init.head");
    att.init(rng);
    Matrix ec = Matrix::Random(4, 6), et = Matrix::Random(4, 6);
    const Matrix got = att.forward(ec, et);
    EXPECT_LT((got - attention_loop(att, ec, et)).cwiseAbs().maxCoeff(), 1e-12) << heads;
  }
}

TEST(CrossAttention, ParameterGradientsMatchFiniteDifferences) {
  CrossAttention att(3, 4, 2);
  auto rng = make_rng(7, "init.head");
  att.init(rng);
  const Matrix ec = Matrix::Random(3, 5), et = Matrix::Random(3, 5);
  const Matrix c = Matrix::Random(6, 5);
  auto loss = [&] { return att.forward(ec, et).cwiseProduct(c).sum(); };
  std::vector<Param*> params;
  att.collect(params);
  for (auto* p : params) p->zero_grad();
  AttentionCache cache;
  att.forward(ec, et, &cache);
  att.backward(cache, c);
  const double h = 1e-5;
  double worst = 0.0;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = loss();
      p->value.data()[i] = saved - h;
      const double down = loss();
      p->value.data()[i] = saved;
      worst = std::max(worst, testing::relative_error(p->grad.data()[i], (up - down) / (2 * h)));
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(NdeHead, StartsAtZeroSoOrcaEqualsDt) {
  ModelConfig cfg;
  cfg.backbone.embedding_dim = 3;
  cfg.backbone.expert_hidden = {6, 4};
  const auto schema = small_schema();
  OrcaModel model(cfg, schema);
  model.init(11);
  const auto records = testing::random_records(schema, 9, cfg.backbone.bin_count, 3);
  const auto f = model.forward(make_id_matrix(records));
  EXPECT_EQ(f.nde_logits.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(f.orca_logits, f.dt_logits);
}

TEST(NdeHead, InputWidthFollowsInteraction) {
  OrcaConfig c;
  c.enable_scd = false;
  NdeHead plain(c, 4, 8);
  EXPECT_FALSE(plain.uses_interaction());
  EXPECT_EQ(plain.tower().in_dim(), 4);
  c.enable_scd = true;
  NdeHead inter(c, 4, 8);
  EXPECT_EQ(inter.tower().in_dim(), 12);
  EXPECT_EQ(inter.tower().out_dim(), 8);
}

TEST(OrcaModel, MaskedPassOnlyFeedsTheNdePath) {
  auto cfg = testing::tiny_model_config();
  const auto schema = testing::tiny_schema();
  OrcaModel model(cfg, schema);
  model.init(5);
  testing::randomize(model, 5);
  const auto records = testing::random_records(schema, 6, cfg.backbone.bin_count, 5);
  const auto ids = make_id_matrix(records);
  IdMatrix masked = ids;
  masked.row(1).setConstant(kMaskIndex);
  const auto plain = model.forward(ids);
  const auto with_mask = model.forward(ids, &masked);
  EXPECT_EQ(plain.dt_logits, with_mask.dt_logits);
  EXPECT_EQ(plain.ctr_logit, with_mask.ctr_logit);
  EXPECT_GT((plain.nde_logits - with_mask.nde_logits).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Predict, ArgmaxTiesGoLow) {
  Eigen::VectorXd v(4);
  v << 1.0, 3.0, 3.0, 2.0;
  EXPECT_EQ(argmax_lowest(v), 1);
}

}  // namespace
}  // namespace orca
