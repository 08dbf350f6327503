import math

import pytest
import torch

from mmfuse import ChannelAttention, channel_affinity, nca_pair

from oracles import finite_diff_check, nca_reference


def normalized(affinity):
    return affinity / affinity.sum(dim=2, keepdim=True)


def test_single_channel_weight_is_exactly_one():
    phi = torch.randn(2, 1, 3, 3)
    aff = channel_affinity(phi, torch.randn(2, 1, 3, 3))
    assert aff.shape == (2, 1, 1)
    assert torch.all(aff > 0)
    assert torch.equal(normalized(aff), torch.ones(2, 1, 1))


def test_two_channel_hand_example():
    # phi_v channels (2, 0), phi_p channels (1, 3) on a 1x1 grid
    phi_v = torch.tensor([2.0, 0.0]).reshape(1, 2, 1, 1)
    phi_p = torch.tensor([1.0, 3.0]).reshape(1, 2, 1, 1)
    weights = normalized(channel_affinity(phi_v, phi_p))[0]
    # logits rows: [2, 6] and [0, 0]
    e4 = math.exp(4.0)
    assert weights[0, 0].item() == pytest.approx(1.0 / (1.0 + e4), rel=1e-6)
    assert weights[0, 1].item() == pytest.approx(e4 / (1.0 + e4), rel=1e-6)
    assert weights[1].tolist() == pytest.approx([0.5, 0.5])
    assert weights[0, 0].item() == pytest.approx(0.0180, abs=5e-5)
    assert weights[0, 1].item() == pytest.approx(0.9820, abs=5e-5)


def test_permuting_primary_channels_permutes_columns():
    torch.manual_seed(0)
    phi_v, phi_p = torch.randn(1, 5, 4, 4), torch.randn(1, 5, 4, 4)
    perm = torch.tensor([3, 0, 4, 1, 2])
    aff = channel_affinity(phi_v, phi_p)
    aff_perm = channel_affinity(phi_v, phi_p[:, perm])
    assert torch.allclose(aff_perm, aff[:, :, perm])


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="differ"):
        channel_affinity(torch.zeros(1, 2, 3, 3), torch.zeros(1, 3, 3, 3))


def test_rows_normalise_to_one():
    torch.manual_seed(1)
    aff = channel_affinity(torch.randn(3, 8, 5, 5) * 4, torch.randn(3, 8, 5, 5) * 4)
    sums = normalized(aff).sum(dim=2)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)


def test_large_logits_do_not_overflow():
    phi = torch.full((1, 4, 2, 2), 40.0)
    aff = channel_affinity(phi, phi)
    assert torch.isfinite(aff).all()


def test_alpha_zero_is_identity():
    torch.manual_seed(2)
    attn = ChannelAttention()
    phi_p, phi_v = torch.randn(2, 6, 5, 5), torch.randn(2, 6, 5, 5)
    assert torch.equal(attn(phi_p, phi_v), phi_p)


def test_two_channel_forward_example():
    phi_v = torch.tensor([2.0, 0.0]).reshape(1, 2, 1, 1)
    phi_p = torch.tensor([1.0, 3.0]).reshape(1, 2, 1, 1)
    attn = ChannelAttention()
    with torch.no_grad():
        attn.alpha.fill_(1.0)
    out = attn(phi_p, phi_v)
    assert out[0, 0, 0, 0].item() == pytest.approx(1.0 + 2.9640, abs=5e-4)
    assert out[0, 1, 0, 0].item() == pytest.approx(3.0 + 2.0, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.3])
def test_matches_double_loop_reference(alpha):
    torch.manual_seed(3)
    attn = ChannelAttention().double()
    with torch.no_grad():
        attn.alpha.fill_(alpha)
    phi_p = torch.randn(1, 8, 4, 4, dtype=torch.float64)
    phi_v = torch.randn(1, 8, 4, 4, dtype=torch.float64)
    expected = nca_reference(phi_p.numpy(), phi_v.numpy(), alpha)
    got = attn(phi_p, phi_v).detach().numpy()
    assert abs(got - expected).max() < 1e-5


def test_pair_matches_two_forward_calls_and_identity_cases():
    torch.manual_seed(4)
    attn_1, attn_2 = ChannelAttention(), ChannelAttention()
    with torch.no_grad():
        attn_1.alpha.fill_(0.5)
        attn_2.alpha.fill_(-0.25)
    phi_1, phi_2 = torch.randn(1, 4, 3, 3), torch.randn(1, 4, 3, 3)
    out_1, out_2 = nca_pair(phi_1, phi_2, attn_1, attn_2)
    assert torch.equal(out_1, attn_1(phi_1, phi_2))
    assert torch.equal(out_2, attn_2(phi_2, phi_1))

    # alpha = 0 on both: pair returns the inputs unchanged
    zero_1, zero_2 = ChannelAttention(), ChannelAttention()
    same_1, same_2 = nca_pair(phi_1, phi_2, zero_1, zero_2)
    assert torch.equal(same_1, phi_1)
    assert torch.equal(same_2, phi_2)

    # identical inputs and shared parameters: identical outputs
    both = nca_pair(phi_1, phi_1.clone(), attn_1, attn_1)
    assert torch.equal(both[0], both[1])


def test_gradients_match_finite_differences():
    torch.manual_seed(5)
    attn = ChannelAttention().double()
    with torch.no_grad():
        attn.alpha.fill_(0.7)  # away from zero so phi_v receives gradient
    phi_p = torch.randn(1, 4, 3, 3, dtype=torch.float64, requires_grad=True)
    phi_v = torch.randn(1, 4, 3, 3, dtype=torch.float64, requires_grad=True)

    worst = finite_diff_check(
        lambda: (attn(phi_p, phi_v) ** 2).sum(),
        [attn.alpha, phi_p, phi_v],
        n_coords=12,
    )
    assert worst < 1e-3


def test_embedded_variant_runs_and_keeps_shape():
    torch.manual_seed(6)
    attn = ChannelAttention(channels=4, embedded=True)
    phi_p, phi_v = torch.randn(1, 4, 5, 5), torch.randn(1, 4, 5, 5)
    out = attn(phi_p, phi_v)
    assert out.shape == phi_p.shape
    assert torch.equal(out, phi_p)  # alpha starts at zero regardless
