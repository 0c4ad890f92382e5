//! Component enumerations and small dense linear algebra shared by the
//! curvature kernels: symmetric-pair packing, derivative multi-index tables,
//! and 4x4 matrix helpers.

/// Packed order of the 10 independent components of a symmetric 2-slot
/// object: (0,0),(0,1),(0,2),(0,3),(1,1),(1,2),(1,3),(2,2),(2,3),(3,3).
pub const SYM_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Inverse lookup: `SYM_INDEX[i][j]` is the packed slot of `(i,j)`.
pub const SYM_INDEX: [[usize; 4]; 4] = build_sym_index();

const fn build_sym_index() -> [[usize; 4]; 4] {
    let mut t = [[0usize; 4]; 4];
    let mut s = 0;
    while s < 10 {
        let (i, j) = SYM_PAIRS[s];
        t[i][j] = s;
        t[j][i] = s;
        s += 1;
    }
    t
}

/// Derivative multi-indices by total order, as per-axis multiplicity
/// vectors, enumerated in nondecreasing-tuple order. `D2` matches
/// `SYM_PAIRS`. These orders are part of the storage and snapshot layout.
pub const D1: [[u8; 4]; 4] = [
    [1, 0, 0, 0],
    [0, 1, 0, 0],
    [0, 0, 1, 0],
    [0, 0, 0, 1],
];
pub const D2: [[u8; 4]; 10] = build_dn::<10>(2);
pub const D3: [[u8; 4]; 20] = build_dn::<20>(3);
pub const D4: [[u8; 4]; 35] = build_dn::<35>(4);

const fn build_dn<const M: usize>(order: usize) -> [[u8; 4]; M] {
    // Enumerate sorted tuples (a <= b <= ...) of the given length over
    // {0..3} and record their multiplicity vectors.
    let mut out = [[0u8; 4]; M];
    let mut count = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = a;
        while b < 4 {
            if order == 2 {
                out[count][a] += 1;
                out[count][b] += 1;
                count += 1;
            } else {
                let mut c = b;
                while c < 4 {
                    if order == 3 {
                        out[count][a] += 1;
                        out[count][b] += 1;
                        out[count][c] += 1;
                        count += 1;
                    } else {
                        let mut d = c;
                        while d < 4 {
                            out[count][a] += 1;
                            out[count][b] += 1;
                            out[count][c] += 1;
                            out[count][d] += 1;
                            count += 1;
                            d += 1;
                        }
                    }
                    c += 1;
                }
            }
            b += 1;
        }
        a += 1;
    }
    out
}

/// `M2[a][b]`: index into `D2` of the multi-index with derivatives along
/// axes `a` and `b` (order-insensitive). Likewise `M3`, `M4`.
pub const M2: [[usize; 4]; 4] = SYM_INDEX;
pub const M3: [[[usize; 4]; 4]; 4] = build_m3();
pub const M4: [[[[usize; 4]; 4]; 4]; 4] = build_m4();

const fn sort3(mut a: usize, mut b: usize, mut c: usize) -> (usize, usize, usize) {
    if a > b {
        let t = a;
        a = b;
        b = t;
    }
    if b > c {
        let t = b;
        b = c;
        c = t;
    }
    if a > b {
        let t = a;
        a = b;
        b = t;
    }
    (a, b, c)
}

const fn d3_index(a: usize, b: usize, c: usize) -> usize {
    let (a, b, c) = sort3(a, b, c);
    // position of (a,b,c) in the sorted-triple enumeration
    let mut idx = 0;
    let mut x = 0;
    while x < 4 {
        let mut y = x;
        while y < 4 {
            let mut z = y;
            while z < 4 {
                if x == a && y == b && z == c {
                    return idx;
                }
                idx += 1;
                z += 1;
            }
            y += 1;
        }
        x += 1;
    }
    usize::MAX
}

const fn d4_index(a: usize, b: usize, c: usize, d: usize) -> usize {
    // sort four small values by repeated min extraction
    let mut v = [a, b, c, d];
    let mut i = 0;
    while i < 4 {
        let mut j = i + 1;
        while j < 4 {
            if v[j] < v[i] {
                let t = v[i];
                v[i] = v[j];
                v[j] = t;
            }
            j += 1;
        }
        i += 1;
    }
    let mut idx = 0;
    let mut x = 0;
    while x < 4 {
        let mut y = x;
        while y < 4 {
            let mut z = y;
            while z < 4 {
                let mut w = z;
                while w < 4 {
                    if x == v[0] && y == v[1] && z == v[2] && w == v[3] {
                        return idx;
                    }
                    idx += 1;
                    w += 1;
                }
                z += 1;
            }
            y += 1;
        }
        x += 1;
    }
    usize::MAX
}

const fn build_m3() -> [[[usize; 4]; 4]; 4] {
    let mut t = [[[0usize; 4]; 4]; 4];
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                t[a][b][c] = d3_index(a, b, c);
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    t
}

const fn build_m4() -> [[[[usize; 4]; 4]; 4]; 4] {
    let mut t = [[[[0usize; 4]; 4]; 4]; 4];
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                let mut d = 0;
                while d < 4 {
                    t[a][b][c][d] = d4_index(a, b, c, d);
                    d += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    t
}

pub type Sym10 = [f64; 10];
pub type Mat4 = [[f64; 4]; 4];

pub fn unpack_sym(s: &Sym10) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (c, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        m[i][j] = s[c];
        m[j][i] = s[c];
    }
    m
}

pub fn pack_sym(m: &Mat4) -> Sym10 {
    let mut s = [0.0; 10];
    for (c, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        s[c] = m[i][j];
    }
    s
}

/// Leading principal minors of a packed symmetric 4x4 matrix, in order
/// 1x1..4x4. Positive-definite iff all four are positive (Sylvester).
pub fn leading_minors(s: &Sym10) -> [f64; 4] {
    let m = unpack_sym(s);
    let m1 = m[0][0];
    let m2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let m3 = det3([
        [m[0][0], m[0][1], m[0][2]],
        [m[1][0], m[1][1], m[1][2]],
        [m[2][0], m[2][1], m[2][2]],
    ]);
    let m4 = det4(&m);
    [m1, m2, m3, m4]
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn det4(m: &Mat4) -> f64 {
    // cofactor expansion along the first row, 2x2 minors shared
    let s0 = m[2][2] * m[3][3] - m[2][3] * m[3][2];
    let s1 = m[2][1] * m[3][3] - m[2][3] * m[3][1];
    let s2 = m[2][1] * m[3][2] - m[2][2] * m[3][1];
    let s3 = m[2][0] * m[3][3] - m[2][3] * m[3][0];
    let s4 = m[2][0] * m[3][2] - m[2][2] * m[3][0];
    let s5 = m[2][0] * m[3][1] - m[2][1] * m[3][0];
    m[0][0] * (m[1][1] * s0 - m[1][2] * s1 + m[1][3] * s2)
        - m[0][1] * (m[1][0] * s0 - m[1][2] * s3 + m[1][3] * s4)
        + m[0][2] * (m[1][0] * s1 - m[1][1] * s3 + m[1][3] * s5)
        - m[0][3] * (m[1][0] * s2 - m[1][1] * s4 + m[1][2] * s5)
}

/// Inverse of a packed symmetric matrix (assumed invertible; curvature
/// callers guard with the SPD check first). Returns the packed inverse.
pub fn inv_sym(s: &Sym10) -> Sym10 {
    let m = unpack_sym(s);
    let inv = inv4(&m);
    pack_sym(&inv)
}

pub fn inv4(m: &Mat4) -> Mat4 {
    // adjugate / determinant with shared 2x2 minors
    let a = m;
    let b00 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let b01 = a[0][0] * a[1][2] - a[0][2] * a[1][0];
    let b02 = a[0][0] * a[1][3] - a[0][3] * a[1][0];
    let b03 = a[0][1] * a[1][2] - a[0][2] * a[1][1];
    let b04 = a[0][1] * a[1][3] - a[0][3] * a[1][1];
    let b05 = a[0][2] * a[1][3] - a[0][3] * a[1][2];
    let b06 = a[2][0] * a[3][1] - a[2][1] * a[3][0];
    let b07 = a[2][0] * a[3][2] - a[2][2] * a[3][0];
    let b08 = a[2][0] * a[3][3] - a[2][3] * a[3][0];
    let b09 = a[2][1] * a[3][2] - a[2][2] * a[3][1];
    let b10 = a[2][1] * a[3][3] - a[2][3] * a[3][1];
    let b11 = a[2][2] * a[3][3] - a[2][3] * a[3][2];
    let det = b00 * b11 - b01 * b10 + b02 * b09 + b03 * b08 - b04 * b07 + b05 * b06;
    let d = 1.0 / det;
    let mut out = [[0.0; 4]; 4];
    out[0][0] = (a[1][1] * b11 - a[1][2] * b10 + a[1][3] * b09) * d;
    out[0][1] = (-a[0][1] * b11 + a[0][2] * b10 - a[0][3] * b09) * d;
    out[0][2] = (a[3][1] * b05 - a[3][2] * b04 + a[3][3] * b03) * d;
    out[0][3] = (-a[2][1] * b05 + a[2][2] * b04 - a[2][3] * b03) * d;
    out[1][0] = (-a[1][0] * b11 + a[1][2] * b08 - a[1][3] * b07) * d;
    out[1][1] = (a[0][0] * b11 - a[0][2] * b08 + a[0][3] * b07) * d;
    out[1][2] = (-a[3][0] * b05 + a[3][2] * b02 - a[3][3] * b01) * d;
    out[1][3] = (a[2][0] * b05 - a[2][2] * b02 + a[2][3] * b01) * d;
    out[2][0] = (a[1][0] * b10 - a[1][1] * b08 + a[1][3] * b06) * d;
    out[2][1] = (-a[0][0] * b10 + a[0][1] * b08 - a[0][3] * b06) * d;
    out[2][2] = (a[3][0] * b04 - a[3][1] * b02 + a[3][3] * b00) * d;
    out[2][3] = (-a[2][0] * b04 + a[2][1] * b02 - a[2][3] * b00) * d;
    out[3][0] = (-a[1][0] * b09 + a[1][1] * b07 - a[1][2] * b06) * d;
    out[3][1] = (a[0][0] * b09 - a[0][1] * b07 + a[0][2] * b06) * d;
    out[3][2] = (-a[3][0] * b03 + a[3][1] * b01 - a[3][2] * b00) * d;
    out[3][3] = (a[2][0] * b03 - a[2][1] * b01 + a[2][2] * b00) * d;
    out
}
