"""Independent reference computations used as test oracles.

Nothing here imports execguard: each oracle re-derives its answer from the
documented byte layouts using hashlib/json/tomli directly.
"""

import hashlib
import json
import sys
from pathlib import Path

from cryptography.hazmat.primitives import hashes

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KIND_TAGS = {"exec": 1, "insmod": 2, "rmmod": 3, "signal": 4}


# -- entry identifiers ---------------------------------------------------------


def ref_entry_id(kind: str, program: bytes, path: str, extra: bytes = b"") -> bytes:
    # a second SHA-256 implementation (OpenSSL via cryptography), not hashlib
    h = hashes.Hash(hashes.SHA256())
    h.update(bytes([KIND_TAGS[kind]]))
    for part in (program, path.encode("utf-8"), extra):
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return h.finalize()


def ref_signal_descriptor(sender: str, sig: int, target: str) -> bytes:
    s, t = sender.encode(), target.encode()
    return len(s).to_bytes(4, "big") + s + bytes([sig]) + len(t).to_bytes(4, "big") + t


def ref_decode_signal_descriptor(blob: bytes):
    n = int.from_bytes(blob[:4], "big")
    sender = blob[4 : 4 + n].decode()
    sig = blob[4 + n]
    m = int.from_bytes(blob[5 + n : 9 + n], "big")
    target = blob[9 + n : 9 + n + m].decode()
    assert 9 + n + m == len(blob)
    return sender, sig, target


# -- Lamport / Merkle ----------------------------------------------------------


def _h(k: int, data: bytes) -> bytes:
    return hashlib.sha256(data).digest()[: k // 8]


def ref_keypair(seed: bytes, i: int, k: int):
    """Returns (private, public) as lists of K [first, second] pairs."""
    f = hashlib.sha256(len(seed).to_bytes(4, "big") + seed + i.to_bytes(4, "big")).digest()
    prefix = len(f).to_bytes(4, "big") + f
    sk = []
    for j in range(1, k + 1):
        pair = [_h(k, prefix + bytes([b]) + j.to_bytes(4, "big")) for b in (0, 1)]
        sk.append(pair)
    pk = [[_h(k, x) for x in pair] for pair in sk]
    return sk, pk


def _bits(k: int, message: bytes):
    d = _h(k, message)
    out = []
    for byte in d:
        for shift in range(7, -1, -1):
            out.append((byte >> shift) & 1)
    return out


def ref_sign(sk, message: bytes, k: int) -> bytes:
    # bit 1 -> first element, bit 0 -> second
    return b"".join(sk[j][0] if bit else sk[j][1] for j, bit in enumerate(_bits(k, message)))


def ref_verify(pk, message: bytes, sig: bytes, k: int) -> bool:
    w = k // 8
    if len(sig) != k * w:
        return False
    for j, bit in enumerate(_bits(k, message)):
        if _h(k, sig[j * w : (j + 1) * w]) != pk[j][0 if bit else 1]:
            return False
    return True


def ref_serialize_pk(pk, k: int) -> bytes:
    return k.to_bytes(2, "big") + b"".join(a + b for a, b in pk)


def ref_root(leaves, k: int) -> bytes:
    """Recursive Merkle root over already-hashed leaves."""
    if len(leaves) == 1:
        return leaves[0]
    mid = len(leaves) // 2
    return _h(k, ref_root(leaves[:mid], k) + ref_root(leaves[mid:], k))


def ref_auth_path(leaves, i: int, k: int):
    """[(sibling, 'L'|'R')] from leaf i (1-based) up to the root, by recursion."""
    if len(leaves) == 1:
        return []
    mid = len(leaves) // 2
    if i <= mid:
        return ref_auth_path(leaves[:mid], i, k) + [(ref_root(leaves[mid:], k), "R")]
    return ref_auth_path(leaves[mid:], i - mid, k) + [(ref_root(leaves[:mid], k), "L")]


def ref_fold(leaf: bytes, path, k: int) -> bytes:
    node = leaf
    for sib, side in path:
        node = _h(k, node + sib) if side == "R" else _h(k, sib + node)
    return node


def ref_tree(seed: bytes, n: int, k: int):
    pks = [ref_keypair(seed, i, k)[1] for i in range(1, n + 1)]
    leaves = [_h(k, ref_serialize_pk(pk, k)) for pk in pks]
    return pks, leaves, ref_root(leaves, k)


# -- control protocol ----------------------------------------------------------


def ref_verify_command_frame(frame: bytes, root: bytes, counter: int):
    """Parse a COMMAND frame by hand and decide it.

    Returns ("accept", leaf) / ("bad-signature", None) / ("replay", None) /
    ("malformed", None).
    """
    try:
        length = int.from_bytes(frame[:4], "big")
        assert length == len(frame) - 4 and frame[4] == 1 and frame[5] == 1
        body, pos = frame[6:], 0

        def field():
            nonlocal pos
            n = int.from_bytes(body[pos : pos + 4], "big")
            out = body[pos + 4 : pos + 4 + n]
            assert len(out) == n
            pos += 4 + n
            return out

        leaf = int.from_bytes(body[:4], "big")
        pos = 4
        cmd, pk_blob, sig, path_blob = field(), field(), field(), field()
        assert pos == len(body)
        k = int.from_bytes(pk_blob[:2], "big")
        w = k // 8
        elems = [pk_blob[2 + p : 2 + p + w] for p in range(0, len(pk_blob) - 2, w)]
        assert len(elems) == 2 * k
        pk = [elems[2 * j : 2 * j + 2] for j in range(k)]
        count = path_blob[0]
        assert len(path_blob) == 1 + count * (1 + w)
        path = []
        for c in range(count):
            off = 1 + c * (1 + w)
            path.append((path_blob[off + 1 : off + 1 + w], "R" if path_blob[off] else "L"))
    except (AssertionError, IndexError, ValueError):
        return ("malformed", None)
    if not ref_verify(pk, cmd, sig, k):
        return ("bad-signature", None)
    idx = leaf - 1
    for sib, side in path:
        if (side == "R") != (idx % 2 == 0):
            return ("bad-signature", None)
        idx //= 2
    if leaf < 1 or idx != 0 or ref_fold(_h(k, ref_serialize_pk(pk, k)), path, k) != root:
        return ("bad-signature", None)
    if leaf <= counter:
        return ("replay", None)
    return ("accept", leaf)


# -- traces --------------------------------------------------------------------


def ref_count_trace_entries(device_dir: Path, trace_name: str) -> int:
    """Distinct whitelist digests a trace produces, scanned straight from the files."""
    manifest = tomllib.loads((device_dir / "image.toml").read_text())
    fs = {p: (device_dir / "blobs" / ref).read_bytes() for p, ref in manifest["files"].items()}
    seen = set()
    for line in (device_dir / "traces" / f"{trace_name}.trace").read_text().splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        rec = json.loads(line)
        kind = rec.get("kind")
        if kind == "exec":
            seen.add(ref_entry_id("exec", fs[rec["path"]], rec["path"]))
        elif kind == "kill":
            extra = ref_signal_descriptor(rec["sender"], rec["signal"], rec["target"])
            seen.add(ref_entry_id("signal", fs[rec["sender"]], rec["sender"], extra))
        elif kind == "insmod":
            lkm = (device_dir / "blobs" / rec["file_ref"]).read_bytes()
            seen.add(ref_entry_id("insmod", fs[rec["path"]], rec["path"], lkm))
        elif kind == "rmmod":
            seen.add(ref_entry_id("rmmod", fs[rec["path"]], rec["path"], rec["lkm_name"].encode()))
        elif kind == "write":
            fs[rec["path"]] = (device_dir / "blobs" / rec["file_ref"]).read_bytes()
    return len(seen)
