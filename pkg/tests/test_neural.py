import copy
import math
import random

import numpy as np
import pytest
import torch

from cnml.datagen import DataConfig, generate_pairs
from cnml.ltl import GenConfig, generate_spec
from cnml.neural.finetune import FinetuneConfig, classification_metrics, finetune_classifier
from cnml.neural.losses import (contrastive_loss, l2_normalize, representation_regularizer, similarity_matrix,
                                total_loss)
from cnml.neural.model import CnmlModel, Encoder, EncoderConfig
from cnml.neural.optim import AdamW, linear_warmup_decay
from cnml.neural.train import (TrainingDiverged, build_vocab, desk_config, gradients, load_checkpoint,
                               paper_scale_config, save_checkpoint, train)
from cnml.neural.vocab import Vocab, encode_text, split_tokens, tokenize

D = torch.float64
TINY = EncoderConfig(vocab_size=20, mode="transformer", d_model=8, n_layers=1, n_heads=2, d_ff=16, max_len=12,
                     d_proj=8)


def tiny_model(seed=0, **kw):
    torch.manual_seed(seed)
    return CnmlModel(TINY, **kw).to(D)


def tiny_batch(seed=0, n=4, length=7):
    g = torch.Generator().manual_seed(seed)
    ct = torch.randint(1, TINY.vocab_size, (n, length), generator=g)
    st = torch.randint(1, TINY.vocab_size, (n, length), generator=g)
    ct[0, -2:] = 0  # some padding
    st[1, -3:] = 0
    return ct, st


@pytest.fixture(scope="module")
def toy_pairs():
    return generate_pairs(DataConfig(count=64), random.Random(0))


# ---------------------------------------------------------------------------
# vocabulary and tokenization


def test_tokenize_small_formula():
    v = Vocab.build(["(G i0)"])
    ids, cut = tokenize("(G i0)", v, 6)
    assert ids[:4] == [v.id("("), v.id("G"), v.id("i0"), v.id(")")]
    assert ids[4:] == [v.pad_id, v.pad_id] and not cut


def test_tokenize_empty_and_truncation():
    v = Vocab.build(["p"])
    assert tokenize("", v, 3) == ([0, 0, 0], False)
    ids, cut = tokenize("(p & p)", v, 2)
    assert len(ids) == 2 and cut
    assert tokenize("zz", v, 1)[0] == [v.unk_id]
    with pytest.raises(ValueError):
        tokenize("p", v, 0)


def test_out_of_vocab_integers_are_spelled():
    v = Vocab.build(["aag 1 0 0 0 0"])
    assert encode_text("57", v) == [v.id("5"), v.id("7")]


def test_vocab_is_deterministic():
    texts = ["(G i1)", "aag 12 3", "(F o0)"]
    assert Vocab.build(texts) == Vocab.build(list(reversed(texts)))
    assert Vocab.build(texts).tokens[:3] == ("<pad>", "<unk>", "<nl>")


def test_tokenize_injective_on_spec_corpus():
    rng = random.Random(0)
    specs = {generate_spec(GenConfig(), rng).text() for _ in range(2000)}
    v = Vocab.build(specs)
    encoded = {tuple(encode_text(s, v)) for s in specs}
    assert len(encoded) == len(specs)
    assert all(t != "<unk>" for s in specs for t in split_tokens(s) if t not in v)


# ---------------------------------------------------------------------------
# encoder


def numpy_encoder(enc: Encoder, tokens: np.ndarray) -> np.ndarray:
    """Step-by-step recomputation of the transformer encoder in numpy."""
    P = {k: v.detach().numpy() for k, v in enc.state_dict().items()}

    def ln(x, w, b):
        mu = x.mean(-1, keepdims=True)
        var = ((x - mu) ** 2).mean(-1, keepdims=True)
        return (x - mu) / np.sqrt(var + 1e-5) * w + b

    def gelu(x):
        from math import erf
        return x * 0.5 * (1 + np.vectorize(erf)(x / math.sqrt(2)))

    out = []
    for row in tokens:
        mask = row != 0
        x = P["tok_emb.weight"][row] + P["pos_emb.weight"][: len(row)]
        for k in range(enc.cfg.n_layers):
            p = f"blocks.{k}."
            h = ln(x, P[p + "ln1.weight"], P[p + "ln1.bias"])
            qkv = h @ P[p + "qkv.weight"].T + P[p + "qkv.bias"]
            d, H = enc.cfg.d_model, enc.cfg.n_heads
            q, kk, v = qkv[:, :d], qkv[:, d:2 * d], qkv[:, 2 * d:]
            heads = []
            for j in range(H):
                sl = slice(j * d // H, (j + 1) * d // H)
                s = q[:, sl] @ kk[:, sl].T / math.sqrt(d // H)
                s = np.where(mask[None, :], s, -1e9)
                a = np.exp(s - s.max(-1, keepdims=True))
                a /= a.sum(-1, keepdims=True)
                heads.append(a @ v[:, sl])
            x = x + np.concatenate(heads, -1) @ P[p + "attn_out.weight"].T + P[p + "attn_out.bias"]
            h = ln(x, P[p + "ln2.weight"], P[p + "ln2.bias"])
            x = x + gelu(h @ P[p + "ff1.weight"].T + P[p + "ff1.bias"]) @ P[p + "ff2.weight"].T + P[p + "ff2.bias"]
        x = ln(x, P["ln_f.weight"], P["ln_f.bias"])
        pooled = x[mask].mean(0)
        out.append(pooled @ P["proj"])
    return np.stack(out)


def test_encoder_matches_manual_recomputation():
    model = tiny_model(3)
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.1 * torch.randn_like(p))
    tokens = torch.tensor([[5, 9, 0, 0], [3, 4, 7, 2]])
    got = model.encoder_spec(tokens).detach().numpy()
    np.testing.assert_allclose(got, numpy_encoder(model.encoder_spec, tokens.numpy()), rtol=1e-9, atol=1e-12)


def test_two_token_bag_encoder_by_hand():
    cfg = EncoderConfig(vocab_size=4, mode="bag", d_model=2, d_ff=2, d_proj=1)
    enc = Encoder(cfg).to(D)
    with torch.no_grad():
        enc.tok_emb.weight.copy_(torch.tensor([[0, 0], [0, 0], [1, 2], [3, -1]], dtype=D))
        enc.mlp[0].weight.copy_(torch.eye(2, dtype=D))
        enc.mlp[0].bias.zero_()
        enc.mlp[2].weight.copy_(torch.eye(2, dtype=D))
        enc.mlp[2].bias.zero_()
        enc.proj.copy_(torch.tensor([[1.0], [1.0]], dtype=D))
    # mean of [1, 2] and [3, -1] = [2, 0.5]; gelu; identity; sum
    m = torch.tensor([2.0, 0.5], dtype=D)
    expected = (m * 0.5 * (1 + torch.erf(m / math.sqrt(2)))).sum()
    assert enc(torch.tensor([[2, 3, 0]])).item() == pytest.approx(expected.item(), abs=1e-12)


def test_zero_parameters_give_zero_embedding():
    model = tiny_model()
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    out = model.encoder_spec(torch.tensor([[3, 4, 5]]))
    assert torch.equal(out, torch.zeros_like(out))


def test_padding_tail_does_not_matter():
    model = tiny_model(1)
    a = model.encoder_circuit(torch.tensor([[4, 5, 6, 0, 0, 0]]))
    b = model.encoder_circuit(torch.tensor([[4, 5, 6]]))
    torch.testing.assert_close(a, b, rtol=1e-12, atol=1e-12)


def test_encoders_share_no_storage():
    model = tiny_model(2)
    ids = {p.data_ptr() for p in model.encoder_spec.parameters()}
    assert not ids & {p.data_ptr() for p in model.encoder_circuit.parameters()}
    tokens = torch.tensor([[3, 4, 5]])
    before = model.encoder_circuit(tokens).detach().clone()
    with torch.no_grad():
        for p in model.encoder_spec.parameters():
            p.add_(1.0)
    assert torch.equal(model.encoder_circuit(tokens), before)


def test_siamese_variant_shares_one_encoder():
    torch.manual_seed(0)
    m = CnmlModel(TINY, siamese=True)
    assert m.encoder_spec is m.encoder_circuit


# ---------------------------------------------------------------------------
# similarity and losses


def test_orthonormal_similarity_is_identity():
    u = torch.eye(3, dtype=D)
    torch.testing.assert_close(similarity_matrix(u, u, 1.0), torch.eye(3, dtype=D))


def test_similarity_scale_invariance():
    g = torch.Generator().manual_seed(0)
    u, v = torch.randn(5, 4, generator=g, dtype=D), torch.randn(5, 4, generator=g, dtype=D)
    scale = torch.rand(5, 1, generator=g, dtype=D) * 10 + 0.1
    torch.testing.assert_close(similarity_matrix(u * scale, v, 0.07), similarity_matrix(u, v, 0.07))


def test_similarity_two_by_two_by_hand():
    u = torch.tensor([[3.0, 4.0], [1.0, 0.0]], dtype=D)
    v = torch.tensor([[0.0, 2.0], [1.0, 1.0]], dtype=D)
    r2 = 1 / math.sqrt(2)
    expected = torch.tensor([[0.8, 0.6 * r2 + 0.8 * r2], [0.0, r2]], dtype=D) / 0.07
    torch.testing.assert_close(similarity_matrix(u, v, 0.07), expected, rtol=1e-12, atol=1e-12)


def test_zero_vector_is_guarded():
    s = similarity_matrix(torch.zeros(2, 3, dtype=D), torch.ones(2, 3, dtype=D), 0.07)
    assert torch.isfinite(s).all()


@pytest.mark.parametrize("n", [1, 2, 5, 64])
def test_uniform_scores_give_log_n(n):
    assert contrastive_loss(torch.full((n, n), 3.7, dtype=D)).item() == pytest.approx(math.log(n), abs=1e-10)


def test_sharp_diagonal_drives_loss_to_zero():
    assert contrastive_loss(1e4 * torch.eye(4, dtype=D)).item() < 1e-10


def test_three_by_three_by_hand():
    s = [[2.0, 0.5, -1.0], [0.0, 1.0, 0.3], [0.7, -0.2, 1.5]]

    def ce(row, target):
        return math.log(sum(math.exp(x) for x in row)) - row[target]

    rows = sum(ce(s[i], i) for i in range(3)) / 3
    cols = sum(ce([s[j][i] for j in range(3)], i) for i in range(3)) / 3
    got = contrastive_loss(torch.tensor(s, dtype=D)).item()
    assert got == pytest.approx(0.5 * (rows + cols), abs=1e-10)


def test_loss_symmetry_and_nonnegativity():
    g = torch.Generator().manual_seed(1)
    for _ in range(20):
        s = torch.randn(6, 6, generator=g, dtype=D) * 5
        assert contrastive_loss(s).item() >= 0
        assert contrastive_loss(s).item() == pytest.approx(contrastive_loss(s.T).item(), abs=1e-12)
    with pytest.raises(ValueError):
        contrastive_loss(torch.zeros(2, 3))


def test_regularizer_identities():
    g = torch.Generator().manual_seed(2)
    u, v = torch.randn(4, 3, generator=g, dtype=D), torch.randn(4, 3, generator=g, dtype=D)
    assert representation_regularizer(u, v, u, v).item() == 0.0
    au, av = torch.randn(4, 3, generator=g, dtype=D), torch.randn(4, 3, generator=g, dtype=D)
    assert representation_regularizer(u, v, au, av).item() >= 0
    total, ce, rr = total_loss(u, v, 0.07, 0.0, au, av)
    assert total.item() == ce.item()
    assert total.item() == contrastive_loss(similarity_matrix(u, v, 0.07)).item()
    with pytest.raises(ValueError):
        representation_regularizer(u, v, au[:2], av)


def test_regularizer_two_samples_by_hand():
    # current: orthogonal pairs (cos 0); anchor: identical rows (cos 1)
    u = torch.tensor([[1.0, 0.0], [0.0, 2.0]], dtype=D)
    v = torch.tensor([[1.0, 1.0], [1.0, -1.0]], dtype=D)
    au = torch.tensor([[1.0, 0.0], [2.0, 0.0]], dtype=D)
    av = torch.tensor([[1.0, 1.0], [1.0, 0.0]], dtype=D)
    cos_av = 1 / math.sqrt(2)
    du = (0 + 1 + 1 + 0) / 4          # off-diagonal cells differ by 1
    dv = (0 + 2 * cos_av ** 2 + 0) / 4
    expected = 0.5 * (du + dv)
    assert representation_regularizer(u, v, au, av).item() == pytest.approx(expected, abs=1e-10)


# ---------------------------------------------------------------------------
# gradients


def _objective(model, anchor, ct, st, lam):
    u, v = model(ct, st)
    au, av = anchor(ct, st) if anchor is not None else (None, None)
    return total_loss(u, v, model.tau, lam, au, av)[0]


@pytest.mark.parametrize("lam", [0.0, 0.25])
def test_gradients_match_finite_differences(lam):
    model = tiny_model(4)
    anchor = tiny_model(5).eval()
    ct, st = tiny_batch(0)
    grads = gradients(model, ct, st, lam, anchor)
    h = 1e-5
    with torch.no_grad():
        for name, p in model.named_parameters():
            fd = torch.zeros_like(p)
            flat, out = p.view(-1), fd.view(-1)
            for k in range(flat.numel()):
                old = flat[k].item()
                flat[k] = old + h
                up = _objective(model, anchor, ct, st, lam).item()
                flat[k] = old - h
                down = _objective(model, anchor, ct, st, lam).item()
                flat[k] = old
                out[k] = (up - down) / (2 * h)
            g = grads[name]
            denom = max(g.norm().item(), fd.norm().item(), 1e-12)
            assert (g - fd).norm().item() / denom <= 1e-5, name


def test_unused_positions_get_zero_gradient():
    model = tiny_model(6)
    ct, st = tiny_batch(1, length=5)
    grads = gradients(model, ct, st)
    assert torch.count_nonzero(grads["encoder_spec.pos_emb.weight"][5:]) == 0
    assert torch.count_nonzero(grads["encoder_spec.pos_emb.weight"][:5]) > 0


def test_gradients_invariant_under_batch_permutation():
    model = tiny_model(7)
    anchor = tiny_model(8)
    ct, st = tiny_batch(2)
    perm = torch.tensor([2, 0, 3, 1])
    g1 = gradients(model, ct, st, 0.25, anchor)
    g2 = gradients(model, ct[perm], st[perm], 0.25, anchor)
    for k in g1:
        torch.testing.assert_close(g1[k], g2[k], rtol=1e-9, atol=1e-12)


def test_non_finite_loss_is_reported():
    model = tiny_model(9)
    with torch.no_grad():
        model.encoder_spec.proj.fill_(float("nan"))
    with pytest.raises(TrainingDiverged):
        gradients(model, *tiny_batch(0))


# ---------------------------------------------------------------------------
# optimizer and schedule


def test_schedule_endpoints():
    assert linear_warmup_decay(0, 1e-3, 100, 1000) == 0.0
    assert linear_warmup_decay(100, 1e-3, 100, 1000) == pytest.approx(1e-3)
    assert linear_warmup_decay(1000, 1e-3, 100, 1000) == 0.0
    assert linear_warmup_decay(550, 1e-3, 100, 1000) == pytest.approx(0.5e-3)
    assert linear_warmup_decay(5, 1e-3, 0, 10) == pytest.approx(0.5e-3)


def test_adamw_matches_reference_implementation():
    torch.manual_seed(0)
    w0 = torch.randn(5, 3, dtype=D)
    a, b = w0.clone().requires_grad_(), w0.clone().requires_grad_()
    ours = AdamW([a], lr=0.01, betas=(0.9, 0.99), weight_decay=0.1)
    ref = torch.optim.AdamW([b], lr=0.01, betas=(0.9, 0.99), weight_decay=0.1)
    target = torch.randn(5, 3, dtype=D)
    for _ in range(25):
        for opt, w in ((ours, a), (ref, b)):
            opt.zero_grad()
            ((w - target) ** 3).abs().sum().backward()
            opt.step()
    torch.testing.assert_close(a, b, rtol=1e-10, atol=1e-12)


def test_paper_scale_preset():
    cfg = paper_scale_config()
    assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.weight_decay) == (2e-4, 0.9, 0.999, 0.01)
    assert (cfg.warmup_steps, cfg.lam, cfg.tau, cfg.batch_size, cfg.grad_accum) == (12000, 0.25, 0.07, 128, 2)
    assert cfg.d_proj == 1024


# ---------------------------------------------------------------------------
# training


def small_config(**kw):
    base = dict(total_steps=50, warmup_steps=5, batch_size=16, lr=3e-3, d_model=32, n_layers=1, n_heads=2,
                d_ff=64, d_proj=32, max_len=128, log_every=1)
    base.update(kw)
    return desk_config(**base)


def test_smoke_training_halves_the_loss(toy_pairs):
    # one fixed batch of 64, so chance level is ln 64
    res = train(toy_pairs, small_config(batch_size=64, total_steps=100, lam=0.0))
    last = np.mean([h["loss"] for h in res.history[-5:]])
    assert last <= 0.5 * math.log(64)
    assert last < res.history[0]["loss"]


def test_deterministic_runs_are_bit_identical(tmp_path, toy_pairs):
    paths = []
    for k in range(2):
        path = str(tmp_path / f"m{k}.npz")
        train(toy_pairs, small_config(total_steps=8, deterministic=True), checkpoint_path=path,
              metrics_path=path + ".jsonl")
        paths.append(path)
    with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
        assert a.read() == b.read()
    with open(paths[0] + ".jsonl") as a, open(paths[1] + ".jsonl") as b:
        assert a.read() == b.read()


def test_checkpoint_round_trip(tmp_path, toy_pairs):
    res = train(toy_pairs, small_config(total_steps=3, warmup_steps=1))
    path = str(tmp_path / "ckpt.npz")
    save_checkpoint(path, res.model, res.vocab, res.config)
    model, vocab, cfg = load_checkpoint(path)
    assert vocab == res.vocab and cfg == res.config
    for (k1, v1), (k2, v2) in zip(res.model.state_dict().items(), model.state_dict().items()):
        assert k1 == k2 and torch.equal(v1, v2)
    np.savez(str(tmp_path / "bad.npz"), x=np.zeros(2))
    with pytest.raises(Exception):
        load_checkpoint(str(tmp_path / "bad.npz"))


def test_tau_is_fixed_unless_configured():
    assert "log_tau" not in dict(tiny_model().named_parameters())
    assert "log_tau" in dict(tiny_model(learnable_tau=True).named_parameters())
    assert tiny_model().tau.item() == pytest.approx(0.07)


# ---------------------------------------------------------------------------
# fine-tuning


def test_metric_formulas():
    pred = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    gold = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0]
    m = classification_metrics(pred, gold)
    assert (m["tp"], m["fp"], m["fn"], m["tn"]) == (3, 1, 2, 4)
    assert m["precision"] == pytest.approx(0.75)
    assert m["recall"] == pytest.approx(0.6)
    assert m["f1"] == pytest.approx(2 / 3)
    assert m["accuracy"] == pytest.approx(0.7)


class _FixedEncoder(torch.nn.Module):
    def __init__(self, table):
        super().__init__()
        self.table = torch.nn.Parameter(table)
        self.cfg = EncoderConfig(vocab_size=table.shape[0], d_proj=table.shape[1])

    def forward(self, tokens):
        return self.table[tokens[:, 0]]


class _Records:
    def __init__(self, i, j):
        self.aag_text, self.spec_text = str(i), str(j)


def test_probe_separates_separable_embeddings():
    # circuit i and spec j share an embedding iff i == j (a positive pair)
    vocab = Vocab.build([str(k) for k in range(40)])
    n = len(vocab)
    torch.manual_seed(0)
    table = torch.randn(n, 6, dtype=D)
    model = CnmlModel(EncoderConfig(vocab_size=n, d_proj=6), 0.07)
    model.encoder_circuit = _FixedEncoder(table)
    model.encoder_spec = _FixedEncoder(table)
    model = model.to(D)
    rng = random.Random(0)
    labeled = [(_Records(k, k), 1) for k in range(40)]
    labeled += [(_Records(k, (k + rng.randint(1, 39)) % 40), 0) for k in range(40)]
    res = finetune_classifier(model, vocab, labeled, FinetuneConfig(epochs=400, lr=0.05, test_fraction=0.2))
    assert res.train_metrics["accuracy"] == 1.0


def test_single_class_data_is_rejected(toy_pairs):
    model = tiny_model()
    vocab = build_vocab(toy_pairs)
    with pytest.raises(ValueError):
        finetune_classifier(model, vocab, [(p, 1) for p in toy_pairs[:10]], FinetuneConfig())
