import numpy as np
import pytest

from treecost import nn
from treecost.graphs import AstGraph
from treecost.models import (HEAD_WIDTHS, LABELS, ModelSpec, build_surrogate,
                             aggregate, encode_nodes, load_checkpoint, predict,
                             propagate, save_checkpoint)
from treecost.synth import (FEATURE_DIM, SynthConfig, TYPE_COMPUTE, TYPE_FOR,
                            TYPE_ROOT, TYPE_VOCAB_SIZE, generate)
from test_synth import build

EMB = 32
IN = FEATURE_DIM + EMB


def dense_params(fan_in, fan_out):
    return fan_in * fan_out + fan_out


def expected_param_count(label, curve_width=None):
    """Closed-form count, written independently of the model code."""
    head = lambda fan_in: (dense_params(fan_in, 128) + dense_params(128, 64)
                           + dense_params(64, 1))
    if label == "Curve":
        return head(curve_width)
    emb = TYPE_VOCAB_SIZE * EMB
    if label == "MLP1":
        return emb + dense_params(IN, 128) + head(128)
    if label == "MLP2":
        return emb + dense_params(IN, 128) + dense_params(128, 128) + head(128)
    if label == "MLP3":
        return emb + dense_params(IN, 128) + 2 * dense_params(128, 128) + head(128)
    if label == "GCN1":
        # one round straight off the raw concat: self (IN x 128), message
        # (128 x 128), bias
        return emb + (IN * 128 + 128 * 128 + 128) + head(128)
    if label == "GCN2":
        return emb + dense_params(IN, 128) + (128 * 128 + 128 * 128 + 128) + head(128)
    if label == "GCN3":
        return (emb + dense_params(IN, 128) + dense_params(128, 128)
                + (128 * 128 + 128 * 128 + 128) + head(128))
    raise AssertionError(label)


def small_dataset():
    return generate(SynthConfig(seed=0, graphs_per_workload=4))


class TestModelSpec:
    @pytest.mark.parametrize("label", LABELS)
    def test_from_label(self, label):
        spec = ModelSpec.from_label(label)
        assert spec.label == label
        assert spec.head_widths == HEAD_WIDTHS
        assert spec.aggregation == "mean"

    def test_encoder_depth_by_family(self):
        assert ModelSpec.from_label("MLP3").encoder_widths == (128, 128, 128)
        assert ModelSpec.from_label("GCN1").encoder_widths == ()
        assert ModelSpec.from_label("GCN1").propagation_widths == (128,)
        assert ModelSpec.from_label("Curve").encoder_widths == ()
        assert ModelSpec.from_label("Curve").propagation_widths == ()

    def test_rejects_noncanonical_widths(self):
        with pytest.raises(ValueError):
            ModelSpec(label="MLP1", encoder_widths=(64,))
        with pytest.raises(ValueError):
            ModelSpec(label="GCN1", encoder_widths=(128,), propagation_widths=(128,))

    def test_rejects_unknown_label(self):
        with pytest.raises(ValueError):
            ModelSpec(label="GCN4")

    def test_embedding_dim_configurable(self):
        spec = ModelSpec.from_label("MLP1", embedding_dim=64)
        assert spec.embedding_dim == 64
        with pytest.raises(ValueError):
            ModelSpec.from_label("MLP1", embedding_dim=0)


class TestBuild:
    @pytest.mark.parametrize("label", LABELS)
    def test_param_count(self, label):
        spec = ModelSpec.from_label(label)
        model = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=0,
                                curve_width=40 if label == "Curve" else None)
        assert model.parameter_count == expected_param_count(label, curve_width=40)

    def test_param_count_with_wider_embedding(self):
        spec = ModelSpec.from_label("MLP1", embedding_dim=64)
        model = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=0)
        expected = (TYPE_VOCAB_SIZE * 64 + dense_params(FEATURE_DIM + 64, 128)
                    + dense_params(128, 128) + dense_params(128, 64) + dense_params(64, 1))
        assert model.parameter_count == expected

    def test_seed_determinism(self):
        spec = ModelSpec.from_label("GCN2")
        a = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=5)
        b = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=5)
        c = build_surrogate(spec, FEATURE_DIM, TYPE_VOCAB_SIZE, seed=6)
        for pa, pb in zip(a.parameters, b.parameters):
            np.testing.assert_array_equal(pa.data, pb.data)
        assert any(not np.array_equal(pa.data, pc.data)
                   for pa, pc in zip(a.parameters, c.parameters))

    def test_biases_start_at_zero(self):
        model = build_surrogate(ModelSpec.from_label("GCN2"), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=0)
        for _, b in model.encoder:
            assert not b.data.any()
        for w, b in model.head:
            assert not b.data.any()

    def test_curve_needs_width(self):
        with pytest.raises(ValueError):
            build_surrogate(ModelSpec.from_label("Curve"), FEATURE_DIM,
                            TYPE_VOCAB_SIZE, seed=0)


class TestStages:
    def test_encode_shapes(self):
        ds = small_dataset()
        g = ds.graphs[0][1]
        mlp = build_surrogate(ModelSpec.from_label("MLP1"), ds.feature_dim,
                              ds.type_vocab_size, seed=0)
        states = encode_nodes(g, mlp)
        assert states.shape == (g.node_count, 128)
        gcn1 = build_surrogate(ModelSpec.from_label("GCN1"), ds.feature_dim,
                               ds.type_vocab_size, seed=0)
        raw = encode_nodes(g, gcn1)
        assert raw.shape == (g.node_count, ds.feature_dim + EMB)

    def test_propagate_identity_for_mlp(self):
        ds = small_dataset()
        g = ds.graphs[0][1]
        mlp = build_surrogate(ModelSpec.from_label("MLP2"), ds.feature_dim,
                              ds.type_vocab_size, seed=0)
        states = encode_nodes(g, mlp)
        assert propagate(g, states, mlp) is states

    def test_propagate_mixes_structure(self):
        ds = small_dataset()
        g = ds.graphs[0][1]
        gcn = build_surrogate(ModelSpec.from_label("GCN1"), ds.feature_dim,
                              ds.type_vocab_size, seed=0)
        states = encode_nodes(g, gcn)
        out = propagate(g, states, gcn)
        assert out.shape == (g.node_count, 128)
        assert not np.array_equal(out.data, states.data)

    def test_aggregate_is_mean(self):
        x = nn.Tensor(np.arange(12, dtype=np.float64).reshape(3, 4))
        np.testing.assert_allclose(aggregate(x).data, x.data.mean(axis=0))

    def test_head_final_layer_linear(self):
        # a linear final layer can output negatives; relu could not
        ds = small_dataset()
        model = build_surrogate(ModelSpec.from_label("MLP1"), ds.feature_dim,
                                ds.type_vocab_size, seed=0)
        preds = [predict(model, g) for _, g in ds.graphs]
        assert min(preds) < 0 or len(set(np.sign(preds))) > 1


class TestInvariances:
    def wiring_pair(self):
        nested = build([TYPE_ROOT, TYPE_FOR, TYPE_FOR, TYPE_COMPUTE],
                       [-1, 0, 1, 2], [1, 4, 8, 1])
        flat = AstGraph(node_count=4, edges=np.array([[0, 1], [0, 2], [1, 3]]),
                        features=nested.features, node_types=nested.node_types,
                        runtime=1.0)
        return nested, flat

    @pytest.mark.parametrize("label", ["MLP1", "MLP2", "MLP3"])
    def test_mlp_blind_to_wiring(self, label):
        nested, flat = self.wiring_pair()
        model = build_surrogate(ModelSpec.from_label(label), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=1)
        assert predict(model, nested) == predict(model, flat)

    @pytest.mark.parametrize("label", ["GCN1", "GCN2", "GCN3"])
    def test_gcn_sees_wiring(self, label):
        nested, flat = self.wiring_pair()
        model = build_surrogate(ModelSpec.from_label(label), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=1)
        assert predict(model, nested) != predict(model, flat)

    @pytest.mark.parametrize("label", ["MLP1", "GCN2"])
    def test_node_relabeling_changes_nothing(self, label):
        a = build([TYPE_ROOT, TYPE_FOR, TYPE_FOR, TYPE_COMPUTE],
                  [-1, 0, 1, 2], [1, 4, 8, 1])
        b = build([TYPE_ROOT, TYPE_FOR, TYPE_COMPUTE, TYPE_FOR],
                  [-1, 3, 1, 0], [1, 8, 1, 4])
        model = build_surrogate(ModelSpec.from_label(label), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=2)
        assert predict(model, a) == pytest.approx(predict(model, b), abs=1e-12)


class TestForward:
    def test_batched_matches_single(self):
        ds = small_dataset()
        graphs = [g for _, g in ds.graphs][:5]
        model = build_surrogate(ModelSpec.from_label("GCN2"), ds.feature_dim,
                                ds.type_vocab_size, seed=0)
        batched = model.forward_graphs(graphs).data
        singles = [predict(model, g) for g in graphs]
        np.testing.assert_allclose(batched, singles, rtol=1e-12, atol=1e-14)

    def test_kind_mismatch_raises(self):
        ds = small_dataset()
        graph = ds.graphs[0][1]
        mlp = build_surrogate(ModelSpec.from_label("MLP1"), ds.feature_dim,
                              ds.type_vocab_size, seed=0)
        curve_model = build_surrogate(ModelSpec.from_label("Curve"), ds.feature_dim,
                                      ds.type_vocab_size, seed=0, curve_width=8)
        with pytest.raises(TypeError):
            predict(curve_model, graph)
        with pytest.raises(TypeError):
            mlp.forward_curves(np.zeros((1, 8)))
        with pytest.raises(TypeError):
            predict(mlp, np.zeros(8))
        with pytest.raises(TypeError):
            predict(mlp, "not a graph")

    def test_curve_width_validation(self):
        ds = small_dataset()
        model = build_surrogate(ModelSpec.from_label("Curve"), ds.feature_dim,
                                ds.type_vocab_size, seed=0, curve_width=8)
        with pytest.raises(ValueError):
            model.forward_curves(np.zeros((2, 9)))

    def test_training_reduces_loss(self):
        # a few full-batch Adam steps on four graphs must cut the loss
        ds = small_dataset()
        graphs = [g for _, g in ds.graphs][:4]
        targets = np.log([g.runtime for g in graphs])
        model = build_surrogate(ModelSpec.from_label("GCN1"), ds.feature_dim,
                                ds.type_vocab_size, seed=0)
        config = nn.OptimizerConfig()
        first = None
        for _ in range(25):
            nn.zero_grad(model.parameters)
            loss = nn.huber_loss(model.forward_graphs(graphs), targets)
            if first is None:
                first = float(loss.data)
            nn.backward(loss)
            nn.adam_step(model.parameters, config, config.learning_rate)
        final = float(nn.huber_loss(model.forward_graphs(graphs), targets).data)
        assert final < 0.5 * first


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        ds = small_dataset()
        model = build_surrogate(ModelSpec.from_label("GCN3"), ds.feature_dim,
                                ds.type_vocab_size, seed=3)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, seed=3, epoch=17)
        loaded, header = load_checkpoint(path)
        assert header["label"] == "GCN3"
        assert header["epoch"] == 17
        assert header["param_count"] == model.parameter_count
        for pa, pb in zip(model.parameters, loaded.parameters):
            np.testing.assert_array_equal(pa.data, pb.data)
        g = ds.graphs[0][1]
        assert predict(model, g) == predict(loaded, g)

    def test_curve_round_trip(self, tmp_path):
        model = build_surrogate(ModelSpec.from_label("Curve"), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=0, curve_width=12)
        save_checkpoint(model, tmp_path / "c.ckpt")
        loaded, _ = load_checkpoint(tmp_path / "c.ckpt")
        x = np.random.default_rng(0).standard_normal((3, 12))
        np.testing.assert_array_equal(model.forward_curves(x).data,
                                      loaded.forward_curves(x).data)

    def test_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b'{"format": "something-else"}\n')
        with pytest.raises(ValueError, match="not a model checkpoint"):
            load_checkpoint(path)

    def test_rejects_truncated_payload(self, tmp_path):
        model = build_surrogate(ModelSpec.from_label("MLP1"), FEATURE_DIM,
                                TYPE_VOCAB_SIZE, seed=0)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(ValueError, match="expected"):
            load_checkpoint(path)
