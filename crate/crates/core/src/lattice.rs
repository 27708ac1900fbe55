//! Exact periodic-point enumeration for integer toral automorphisms.
//!
//! The period-n points of `A` are `x = u / D` with `D = |det(A^n - I)|` and
//! `u` ranging over the subgroup of `(Z/D)^2` generated by the columns of
//! `adj(A^n - I)`. That subgroup is put in Hermite normal form so that every
//! point gets a dense index and cycles can be traced with a bitmap.

use rug::Integer;

pub type IMat = [[i128; 2]; 2];

pub fn imat(a: &[[i64; 2]; 2]) -> IMat {
    [[a[0][0] as i128, a[0][1] as i128], [a[1][0] as i128, a[1][1] as i128]]
}

pub fn imul(a: &IMat, b: &IMat) -> Option<IMat> {
    let e = |i: usize, j: usize| -> Option<i128> {
        a[i][0].checked_mul(b[0][j])?.checked_add(a[i][1].checked_mul(b[1][j])?)
    };
    Some([[e(0, 0)?, e(0, 1)?], [e(1, 0)?, e(1, 1)?]])
}

pub fn ipow(a: &IMat, n: u32) -> Option<IMat> {
    let mut r: IMat = [[1, 0], [0, 1]];
    for _ in 0..n {
        r = imul(&r, a)?;
    }
    Some(r)
}

pub fn idet(a: &IMat) -> i128 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn imat_vec(a: &IMat, v: &[i128; 2]) -> [i128; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Big-integer 2x2 matrix, for lift equations with long periods.
pub type BigMat = [[Integer; 2]; 2];

pub fn big(a: &[[i64; 2]; 2]) -> BigMat {
    [
        [Integer::from(a[0][0]), Integer::from(a[0][1])],
        [Integer::from(a[1][0]), Integer::from(a[1][1])],
    ]
}

pub fn big_mul(a: &BigMat, b: &BigMat) -> BigMat {
    let e = |i: usize, j: usize| Integer::from(&a[i][0] * &b[0][j]) + Integer::from(&a[i][1] * &b[1][j]);
    [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]]
}

pub fn big_pow(a: &BigMat, n: u32) -> BigMat {
    let mut r: BigMat = [[Integer::from(1), Integer::from(0)], [Integer::from(0), Integer::from(1)]];
    let mut base = a.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            r = big_mul(&r, &base);
        }
        base = big_mul(&base, &base);
        k >>= 1;
    }
    r
}

pub fn big_vec(a: &BigMat, v: &[Integer; 2]) -> [Integer; 2] {
    [
        Integer::from(&a[0][0] * &v[0]) + Integer::from(&a[0][1] * &v[1]),
        Integer::from(&a[1][0] * &v[0]) + Integer::from(&a[1][1] * &v[1]),
    ]
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

fn gcd(a: i128, b: i128) -> i128 {
    ext_gcd(a, b).0
}

/// Hermite basis `{(a, b), (0, c)}` of the lattice `adj(M) Z^2 + D Z^2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodLattice {
    pub n: u32,
    pub d: i128,
    pub a: i128,
    pub b: i128,
    pub c: i128,
}

impl PeriodLattice {
    pub fn new(matrix: &IMat, n: u32) -> Option<Self> {
        let mut m = ipow(matrix, n)?;
        m[0][0] -= 1;
        m[1][1] -= 1;
        let d = idet(&m).abs();
        if d == 0 {
            return None;
        }
        let gens = [[m[1][1], -m[1][0]], [-m[0][1], m[0][0]]];
        let (mut a, mut b, mut c) = (d, 0i128, d);
        for g in gens {
            let (x, y) = (g[0].rem_euclid(d), g[1].rem_euclid(d));
            let (gg, s, t) = ext_gcd(a, x);
            let nb = (s * b + t * y).rem_euclid(d);
            let other = ((x / gg) * b - (a / gg) * y).rem_euclid(d);
            a = gg;
            b = nb;
            c = gcd(c, other);
            b = b.rem_euclid(c);
        }
        Some(PeriodLattice { n, d, a, b, c })
    }

    pub fn count(&self) -> i128 {
        (self.d / self.a) * (self.d / self.c)
    }

    pub fn index(&self, u: &[i128; 2]) -> usize {
        let i = u[0] / self.a;
        let j = (u[1] - i * self.b).rem_euclid(self.d) / self.c;
        (i * (self.d / self.c) + j) as usize
    }

    pub fn point(&self, idx: usize) -> [i128; 2] {
        let w = self.d / self.c;
        let i = idx as i128 / w;
        let j = idx as i128 % w;
        [i * self.a, (i * self.b + j * self.c).rem_euclid(self.d)]
    }
}

/// A primitive cycle of the linear map, as numerators over `d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCycle {
    pub n: u32,
    pub d: i128,
    /// Cycle points in dynamical order starting at the lexicographically least.
    pub points: Vec<[i128; 2]>,
}

impl LinearCycle {
    pub fn rep(&self) -> [i128; 2] {
        self.points[0]
    }

    /// Lattice class `m` with `A^n x = x + m` for the representative.
    pub fn lattice_class(&self, matrix: &IMat) -> [i64; 2] {
        let an = ipow(matrix, self.n).expect("period fits i128");
        let u = self.rep();
        let w = imat_vec(&an, &u);
        [((w[0] - u[0]) / self.d) as i64, ((w[1] - u[1]) / self.d) as i64]
    }

    pub fn symbolic_id(&self) -> String {
        let u = self.rep();
        format!("n{}:{},{}/{}", self.n, u[0], u[1], self.d)
    }
}

/// All primitive cycles of exact period `n`, sorted by representative.
pub fn primitive_cycles(matrix: &IMat, n: u32) -> Option<(PeriodLattice, Vec<LinearCycle>)> {
    let lat = PeriodLattice::new(matrix, n)?;
    let total = lat.count() as usize;
    let d = lat.d;
    let mut seen = vec![false; total];
    let mut out = Vec::new();
    for idx in 0..total {
        if seen[idx] {
            continue;
        }
        let start = lat.point(idx);
        let mut pts = vec![start];
        seen[idx] = true;
        let mut u = start;
        loop {
            let v = imat_vec(matrix, &u);
            u = [v[0].rem_euclid(d), v[1].rem_euclid(d)];
            if u == start {
                break;
            }
            seen[lat.index(&u)] = true;
            pts.push(u);
        }
        if pts.len() as u32 == n {
            let k = (0..pts.len()).min_by_key(|&i| pts[i]).unwrap();
            pts.rotate_left(k);
            out.push(LinearCycle { n, d, points: pts });
        }
    }
    out.sort_by(|x, y| x.rep().cmp(&y.rep()));
    Some((lat, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAT: IMat = [[2, 1], [1, 1]];

    /// Brute force: all u in [0,D)^2 with (A^n - I) u = 0 mod D.
    fn brute_count(a: &IMat, n: u32) -> i128 {
        let mut m = ipow(a, n).unwrap();
        m[0][0] -= 1;
        m[1][1] -= 1;
        let d = idet(&m).abs();
        let mut k = 0;
        for u0 in 0..d {
            for u1 in 0..d {
                let w = imat_vec(&m, &[u0, u1]);
                if w[0] % d == 0 && w[1] % d == 0 {
                    k += 1;
                }
            }
        }
        k
    }

    #[test]
    fn hnf_count_matches_brute_force() {
        for n in 1..=5 {
            let lat = PeriodLattice::new(&CAT, n).unwrap();
            assert_eq!(lat.count(), brute_count(&CAT, n), "n={n}");
        }
        let other: IMat = [[3, 2], [1, 1]];
        for n in 1..=3 {
            assert_eq!(PeriodLattice::new(&other, n).unwrap().count(), brute_count(&other, n));
        }
    }

    #[test]
    fn index_roundtrip() {
        let lat = PeriodLattice::new(&CAT, 6).unwrap();
        for i in 0..lat.count() as usize {
            assert_eq!(lat.index(&lat.point(i)), i);
        }
    }

    #[test]
    fn cycle_points_sum_to_count() {
        for n in 1..=8u32 {
            let lat = PeriodLattice::new(&CAT, n).unwrap();
            let mut pts = 0i128;
            for d in 1..=n {
                if n % d == 0 {
                    pts += d as i128 * primitive_cycles(&CAT, d).unwrap().1.len() as i128;
                }
            }
            assert_eq!(pts, lat.count());
        }
    }

    #[test]
    fn big_pow_matches_small() {
        let b = big_pow(&big(&[[2, 1], [1, 1]]), 9);
        let s = ipow(&CAT, 9).unwrap();
        assert_eq!(b[0][1], Integer::from(s[0][1]));
    }
}
