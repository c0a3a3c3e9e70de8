"""Quad reorder unit: pairs same-position quads of a flushed TC bin into adjacent warp slots."""
from __future__ import annotations

from .packets import WarpPacket

WARP_QUADS = 8


class QRUError(RuntimeError):
    pass


def qru_reorder(quads, qm_enabled: bool, quads_per_side: int = 8, warp_quads: int = WARP_QUADS) -> list[WarpPacket]:
    """Build warps from one flushed group (all quads share a tile).

    Without quad merging the quads are packed in arrival order. With it,
    quad IDs are scanned in order against one register per quad position: a
    hit emits (registered, current) as a merge pair and invalidates the
    register, so pairs never chain. Pairs go first, two slots each, then the
    unmerged quads fill the remaining slots in ID order.
    """
    if len(quads) > 128:
        raise QRUError(f"group of {len(quads)} quads exceeds the 128 quad IDs")
    seen = set()
    for q in quads:
        key = (q.tile, q.qx, q.qy, q.ordinal)
        if key in seen:
            raise QRUError(f"duplicate quad {key}")
        seen.add(key)

    if not qm_enabled:
        return [WarpPacket(list(quads[i:i + warp_quads])) for i in range(0, len(quads), warp_quads)]

    registers = [-1] * (quads_per_side * quads_per_side)
    merged = [False] * len(quads)  # the 128-bit merge bitmap
    pairs = []
    tile = quads[0].tile if quads else None
    for qid, q in enumerate(quads):
        if q.tile != tile:
            raise QRUError("quads from different tiles in one group")
        r = q.qy * quads_per_side + q.qx
        held = registers[r]
        if held >= 0:
            pairs.append((held, qid))
            merged[held] = merged[qid] = True
            registers[r] = -1
        else:
            registers[r] = qid

    warps = []
    cur = WarpPacket()
    for front, back in pairs:
        if len(cur.slots) == warp_quads:
            warps.append(cur)
            cur = WarpPacket()
        n = len(cur.slots)
        cur.slots.extend((quads[front], quads[back]))
        cur.merge_flags |= (1 << n) | (1 << (n + 1))
    for qid, q in enumerate(quads):
        if merged[qid]:
            continue
        if len(cur.slots) == warp_quads:
            warps.append(cur)
            cur = WarpPacket()
        cur.slots.append(q)
    if cur.slots:
        warps.append(cur)
    return warps
