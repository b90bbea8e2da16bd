"""Untrained image denoiser: five-level encoder-decoder with skips.

Every encoder level runs two 3x3 conv blocks (conv -> per-channel norm ->
LeakyReLU 0.1) followed by a stride-2 conv block; levels 3-5 insert a
non-local attention block after their conv blocks, before downsampling.
The decoder mirrors with bilinear upsampling, concatenation of the
matching encoder features, and two conv blocks. A 1x1 conv plus sigmoid
maps back to image channels, so outputs always lie strictly inside (0, 1).

Inputs whose sides are not multiples of 16 are reflect-padded up to the
next multiple and the output is cropped back; any loss is understood to be
computed on the cropped output (the pad region receives zero upstream
gradient).
"""

import numpy as np

from .errors import ValidationError
from .layers import (
    BilinearResize,
    ChannelNorm,
    Conv2d,
    LeakyReLU,
    NonLocalBlock,
    Sigmoid,
    collect_params,
)

LEVELS = 5
NONLOCAL_LEVELS = (3, 4, 5)
SIZE_MULTIPLE = 2 ** (LEVELS - 1)


class ConvBlock:
    def __init__(self, in_channels, out_channels, rng, stride=1):
        self.conv = Conv2d(in_channels, out_channels, 3, rng, stride=stride)
        self.norm = ChannelNorm(out_channels)
        self.act = LeakyReLU(0.1)

    def forward(self, x):
        return self.act.forward(self.norm.forward(self.conv.forward(x)))

    def backward(self, dy):
        return self.conv.backward(self.norm.backward(self.act.backward(dy)))

    def param_items(self):
        items = [("conv." + n, p, g) for n, p, g in self.conv.param_items()]
        items += [("norm." + n, p, g) for n, p, g in self.norm.param_items()]
        return items


class Denoiser:
    def __init__(self, in_channels, base_channels=128, seed=0):
        if in_channels not in (1, 3):
            raise ValidationError(f"in_channels must be 1 or 3, got {in_channels}")
        if base_channels < 8:
            raise ValidationError(f"base_channels must be >= 8, got {base_channels}")
        self.in_channels = in_channels
        self.base_channels = base_channels
        rng = np.random.default_rng(seed)
        bc = base_channels

        self.enc_blocks = []
        self.enc_nonlocal = []
        self.enc_down = []
        cin = in_channels
        for level in range(1, LEVELS + 1):
            self.enc_blocks.append((ConvBlock(cin, bc, rng), ConvBlock(bc, bc, rng)))
            self.enc_nonlocal.append(
                NonLocalBlock(bc, rng) if level in NONLOCAL_LEVELS else None
            )
            self.enc_down.append(ConvBlock(bc, bc, rng, stride=2))
            cin = bc

        # decoder units run deepest-first (level 5 down to 1)
        self.dec_up = [BilinearResize() for _ in range(LEVELS)]
        self.dec_blocks = [
            (ConvBlock(2 * bc, bc, rng), ConvBlock(bc, bc, rng)) for _ in range(LEVELS)
        ]
        self.head = Conv2d(bc, in_channels, 1, rng)
        self.out_act = Sigmoid()
        self._pad_state = None

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ValidationError(
                f"expected (H, W, {self.in_channels}) input, got {x.shape}"
            )
        h, w, _ = x.shape
        ph = (-h) % SIZE_MULTIPLE
        pw = (-w) % SIZE_MULTIPLE
        if ph >= h or pw >= w:
            raise ValidationError(
                f"image {h}x{w} too small to reflect-pad to a multiple of {SIZE_MULTIPLE}"
            )
        self._pad_state = (h, w, ph, pw)
        if ph or pw:
            x = np.pad(x, ((0, ph), (0, pw), (0, 0)), mode="reflect")

        feat = x
        skips = []
        for level in range(LEVELS):
            b1, b2 = self.enc_blocks[level]
            feat = b2.forward(b1.forward(feat))
            nl = self.enc_nonlocal[level]
            if nl is not None:
                feat = nl.forward(feat)
            skips.append(feat)
            feat = self.enc_down[level].forward(feat)
        self._skip_shapes = [s.shape for s in skips]

        for i in range(LEVELS):  # decoder level 5 - i
            skip = skips[LEVELS - 1 - i]
            feat = self.dec_up[i].forward(feat, skip.shape[:2])
            feat = np.concatenate([feat, skip], axis=2)
            b1, b2 = self.dec_blocks[i]
            feat = b2.forward(b1.forward(feat))

        out = self.out_act.forward(self.head.forward(feat))
        if ph or pw:
            out = np.ascontiguousarray(out[:h, :w])
        return out

    def backward(self, dy):
        h, w, ph, pw = self._pad_state
        if ph or pw:
            full = np.zeros((h + ph, w + pw, self.in_channels))
            full[:h, :w] = dy
            dy = full
        dfeat = self.head.backward(self.out_act.backward(dy))

        dskips = [None] * LEVELS
        bc = self.base_channels
        for i in range(LEVELS - 1, -1, -1):  # decoder level 5 - i, reversed
            b1, b2 = self.dec_blocks[i]
            dfeat = b1.backward(b2.backward(dfeat))
            dskips[LEVELS - 1 - i] = dfeat[:, :, bc:]
            dfeat = self.dec_up[i].backward(np.ascontiguousarray(dfeat[:, :, :bc]))

        for level in range(LEVELS - 1, -1, -1):
            dfeat = self.enc_down[level].backward(dfeat)
            dfeat = dfeat + dskips[level]
            nl = self.enc_nonlocal[level]
            if nl is not None:
                dfeat = nl.backward(dfeat)
            b1, b2 = self.enc_blocks[level]
            dfeat = b1.backward(b2.backward(dfeat))
        return dfeat

    def params(self):
        named = []
        for level in range(LEVELS):
            b1, b2 = self.enc_blocks[level]
            named.append((f"enc{level + 1}.b1", b1))
            named.append((f"enc{level + 1}.b2", b2))
            nl = self.enc_nonlocal[level]
            if nl is not None:
                named.append((f"enc{level + 1}.nl", nl))
            named.append((f"enc{level + 1}.down", self.enc_down[level]))
        for i in range(LEVELS):
            b1, b2 = self.dec_blocks[i]
            named.append((f"dec{LEVELS - i}.b1", b1))
            named.append((f"dec{LEVELS - i}.b2", b2))
        named.append(("head", self.head))
        return collect_params(named)

    def zero_grads(self):
        for _, grad in self.params().values():
            grad[...] = 0.0
