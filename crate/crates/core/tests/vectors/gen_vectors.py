"""Independent reference values for the Rust test-suite.

Plain affine arithmetic over Python integers and hashlib. Run from this
directory; writes vectors.json next to this file.
"""
import hashlib
import json

# ---- curves ----

TOY = dict(p=17, a=2, b=2, g=(5, 1), q=19)
P256 = dict(
    p=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF,
    a=0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFC,
    b=0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B,
    g=(0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296,
       0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5),
    q=0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551,
)


def add(c, P, Q):
    p = c["p"]
    if P is None:
        return Q
    if Q is None:
        return P
    if P[0] == Q[0] and (P[1] + Q[1]) % p == 0:
        return None
    if P == Q:
        lam = (3 * P[0] * P[0] + c["a"]) * pow(2 * P[1], -1, p) % p
    else:
        lam = (Q[1] - P[1]) * pow(Q[0] - P[0], -1, p) % p
    x = (lam * lam - P[0] - Q[0]) % p
    return (x, (lam * (P[0] - x) - P[1]) % p)


def mul(c, k, P):
    R = None
    for bit in bin(k)[2:] if k else "":
        R = add(c, R, R)
        if bit == "1":
            R = add(c, R, P)
    return R


def width(n):
    return (n.bit_length() + 7) // 8


def enc_point(c, P):
    if P is None:
        return b"\x00"
    return bytes([2 + (P[1] & 1)]) + P[0].to_bytes(width(c["p"]), "big")


def enc_scalar(c, k):
    return k.to_bytes(width(c["q"]), "big")


def pt_json(P):
    return None if P is None else [P[0], P[1]]


# ---- hashes ----

def sha(data):
    return hashlib.sha256(data).digest()


def h1(c, data):
    return int.from_bytes(sha(b"H1" + data), "big") % c["q"]


def h2(data):
    return sha(b"H2" + data)


def pad32(t):
    return t.to_bytes(32, "big")


def widen32(b):
    return b.rjust(32, b"\x00")


def xor(*xs):
    out = bytes(32)
    for x in xs:
        out = bytes(a ^ b for a, b in zip(out, x))
    return out


def mask(c, P):
    return h2(b"MASK" + enc_point(c, P))


def frame(t, payload):
    return bytes([t]) + len(payload).to_bytes(2, "big") + payload


# ---- toy group tables ----

def toy_tables():
    c = TOY
    elems = [None] + [mul(c, k, c["g"]) for k in range(1, 19)]
    assert mul(c, 19, c["g"]) is None
    index = {e: i for i, e in enumerate(elems)}
    # add_table[i][j] = index of (i G + j G)
    add_table = [[index[add(c, elems[i], elems[j])] for j in range(19)] for i in range(19)]
    # every element lies on the curve and all are distinct
    for e in elems[1:]:
        assert (e[1] ** 2 - e[0] ** 3 - 2 * e[0] - 2) % 17 == 0
    assert len(set(elems)) == 19
    return {"multiples": [pt_json(e) for e in elems], "add_index": add_table}


# ---- scripted toy handshake ----

def toy_handshake():
    c = TOY
    G = c["g"]
    d_rc = 7
    p_rc = mul(c, d_rc, G)

    def register(ident, r, d):
        R = mul(c, r, G)
        h = h1(c, ident.encode() + enc_point(c, R))
        sid = (r + d_rc * h) % c["q"]
        assert mul(c, sid, G) == add(c, R, mul(c, h, p_rc))
        return dict(id=ident, r=r, d=d, R=R, P=mul(c, d, G), h=h, sid=sid)

    u = register("u1", 3, 5)
    ms = register("ms", 11, 13)
    r1, t_u, t_ms = 4, 1000, 1002

    R1 = mul(c, r1, G)
    R1ms = mul(c, r1, ms["P"])
    tk = xor(widen32(enc_scalar(c, u["sid"])), pad32(t_u), mask(c, R1ms))

    Rums = mul(c, ms["d"], u["R"])
    assert Rums == mul(c, u["r"], ms["P"])
    sid_u = enc_scalar(c, u["sid"])
    auth_ms = xor(h2(sid_u + pad32(t_u) + pad32(t_ms)), h2(sid_u + enc_point(c, Rums)))

    Rmsu = mul(c, u["d"], ms["R"])
    assert Rmsu == mul(c, ms["r"], u["P"])
    auth_u = xor(
        h2(sid_u + enc_scalar(c, ms["sid"]) + pad32(t_u) + pad32(t_ms)),
        h2(sid_u + enc_point(c, Rmsu)),
    )
    sk = h2(b"KDF" + sid_u + enc_point(c, R1ms) + enc_point(c, Rums) + enc_point(c, Rmsu) + pad32(t_u) + pad32(t_ms))

    m1 = frame(1, tk + t_u.to_bytes(4, "big") + enc_point(c, R1))
    m2 = frame(2, t_ms.to_bytes(4, "big") + auth_ms)
    m3 = frame(3, auth_u)

    def party(x):
        return dict(id=x["id"], r=x["r"], d=x["d"], h=x["h"], sid=x["sid"],
                    commitment=pt_json(x["R"]), public_key=pt_json(x["P"]))

    return dict(
        d_rc=d_rc, p_rc=pt_json(p_rc),
        user=party(u), server=party(ms),
        r1=r1, t_u=t_u, t_ms=t_ms,
        r1_point=pt_json(R1), r1_ms=pt_json(R1ms),
        token=tk.hex(), auth_ms=auth_ms.hex(), auth_u=auth_u.hex(), session_key=sk.hex(),
        m1=m1.hex(), m2=m2.hex(), m3=m3.hex(),
    )


# ---- P-256 multiples ----

def p256_vectors():
    c = P256
    q = c["q"]
    ks = [1, 2, 3, 0xFF, 2**128 + 1, 2**255 + 12345, q - 2, q - 1]
    out = []
    for k in ks:
        P = mul(c, k, c["g"])
        out.append(dict(k=format(k, "064x"), encoding=enc_point(c, P).hex()))
    return out


def main():
    vectors = dict(
        toy_group=toy_tables(),
        toy_handshake=toy_handshake(),
        p256_multiples=p256_vectors(),
    )
    with open("vectors.json", "w") as f:
        json.dump(vectors, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
