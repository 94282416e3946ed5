//! Small finite fields GF(p^n), just enough for quadratic characters.
//!
//! Elements are encoded as integers `0..q` whose base-`p` digits are the
//! polynomial coefficients (lowest degree first).

pub(crate) struct FiniteField {
    p: usize,
    n: usize,
    q: usize,
    /// Quadratic character of each element: 0, +1 or -1.
    chi: Vec<i8>,
}

/// Returns `(p, n)` with `q = p^n` for prime `p`, or `None`.
pub(crate) fn prime_power(q: usize) -> Option<(usize, usize)> {
    if q < 2 {
        return None;
    }
    let p = (2..).find(|f| q.is_multiple_of(*f) || f * f > q).map(|f| {
        if q.is_multiple_of(f) {
            f
        } else {
            q
        }
    })?;
    let (mut r, mut n) = (q, 0);
    while r % p == 0 {
        r /= p;
        n += 1;
    }
    (r == 1).then_some((p, n))
}

fn trim(mut a: Vec<usize>) -> Vec<usize> {
    while a.len() > 1 && *a.last().unwrap() == 0 {
        a.pop();
    }
    a
}

fn poly_rem(a: &[usize], m: &[usize], p: usize) -> Vec<usize> {
    // m is monic.
    let mut r = a.to_vec();
    let dm = m.len() - 1;
    while r.len() > dm && r.len() > 1 {
        let lead = *r.last().unwrap();
        let shift = r.len() - 1 - dm;
        if lead != 0 {
            for (i, &c) in m.iter().enumerate() {
                r[shift + i] = (r[shift + i] + p - (lead * c) % p) % p;
            }
        }
        r.pop();
    }
    trim(r)
}

fn is_zero(a: &[usize]) -> bool {
    a.iter().all(|&c| c == 0)
}

fn monic_polys(p: usize, deg: usize) -> impl Iterator<Item = Vec<usize>> {
    let count = p.pow(deg as u32);
    (0..count).map(move |mut code| {
        let mut c = Vec::with_capacity(deg + 1);
        for _ in 0..deg {
            c.push(code % p);
            code /= p;
        }
        c.push(1);
        c
    })
}

fn is_irreducible(f: &[usize], p: usize) -> bool {
    let deg = f.len() - 1;
    (1..=deg / 2).all(|k| monic_polys(p, k).all(|g| !is_zero(&poly_rem(f, &g, p))))
}

impl FiniteField {
    pub(crate) fn new(q: usize) -> Option<FiniteField> {
        let (p, n) = prime_power(q)?;
        let modulus = if n == 1 {
            vec![0, 1]
        } else {
            monic_polys(p, n).find(|f| is_irreducible(f, p))?
        };
        let mut field = FiniteField {
            p,
            n,
            q,
            chi: vec![-1; q],
        };
        field.chi[0] = 0;
        for x in 1..q {
            let sq = field.mul(x, x, &modulus);
            field.chi[sq] = 1;
        }
        Some(field)
    }

    fn digits(&self, mut x: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            d.push(x % self.p);
            x /= self.p;
        }
        d
    }

    fn encode(&self, d: &[usize]) -> usize {
        d.iter().rev().fold(0, |acc, &c| acc * self.p + c)
    }

    fn mul(&self, a: usize, b: usize, modulus: &[usize]) -> usize {
        if self.n == 1 {
            return (a * b) % self.p;
        }
        let (da, db) = (self.digits(a), self.digits(b));
        let mut prod = vec![0usize; 2 * self.n - 1];
        for (i, &x) in da.iter().enumerate() {
            for (j, &y) in db.iter().enumerate() {
                prod[i + j] = (prod[i + j] + x * y) % self.p;
            }
        }
        let mut r = poly_rem(&prod, modulus, self.p);
        r.resize(self.n, 0);
        self.encode(&r)
    }

    pub(crate) fn sub(&self, a: usize, b: usize) -> usize {
        let (da, db) = (self.digits(a), self.digits(b));
        let d: Vec<usize> = da
            .iter()
            .zip(&db)
            .map(|(&x, &y)| (x + self.p - y) % self.p)
            .collect();
        self.encode(&d)
    }

    pub(crate) fn chi(&self, a: usize) -> i8 {
        self.chi[a]
    }

    pub(crate) fn order(&self) -> usize {
        self.q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_powers() {
        assert_eq!(prime_power(27), Some((3, 3)));
        assert_eq!(prime_power(37), Some((37, 1)));
        assert_eq!(prime_power(49), Some((7, 2)));
        assert_eq!(prime_power(2), Some((2, 1)));
        assert_eq!(prime_power(75), None);
        assert_eq!(prime_power(1), None);
    }

    #[test]
    fn half_the_units_are_squares() {
        for q in [7usize, 9, 11, 25, 27, 37] {
            let f = FiniteField::new(q).unwrap();
            let squares = (1..q).filter(|&x| f.chi(x) == 1).count();
            assert_eq!(squares, (q - 1) / 2, "q = {q}");
        }
    }

    #[test]
    fn minus_one_is_nonsquare_iff_q_is_3_mod_4() {
        for q in [7usize, 11, 19, 27, 43] {
            let f = FiniteField::new(q).unwrap();
            assert_eq!(f.chi(f.sub(0, 1)), -1, "q = {q}");
        }
        for q in [5usize, 9, 13, 25, 37] {
            let f = FiniteField::new(q).unwrap();
            assert_eq!(f.chi(f.sub(0, 1)), 1, "q = {q}");
        }
    }
}
