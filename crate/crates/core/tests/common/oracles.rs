//! Slow, direct implementations used to check the library's metrics.

fn harmonic(overlap: usize, c: usize, r: usize) -> f64 {
    if c == 0 && r == 0 {
        return 1.0;
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / c as f64;
    let rec = overlap as f64 / r as f64;
    2.0 * p * rec / (p + rec)
}

/// Each candidate token claims the first unclaimed equal reference token.
pub fn rouge1(c: &[String], r: &[String]) -> f64 {
    let mut used = vec![false; r.len()];
    let mut overlap = 0;
    for w in c {
        if let Some(j) = (0..r.len()).find(|&j| !used[j] && r[j] == *w) {
            used[j] = true;
            overlap += 1;
        }
    }
    harmonic(overlap, c.len(), r.len())
}

fn is_subsequence(sub: &[&String], r: &[String]) -> bool {
    let mut it = r.iter();
    sub.iter().all(|w| it.any(|x| x == *w))
}

/// Longest common subsequence by trying every subset of the candidate.
pub fn lcs(c: &[String], r: &[String]) -> usize {
    assert!(c.len() <= 16, "oracle is exponential");
    let mut best = 0;
    for mask in 0u32..(1 << c.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let sub: Vec<&String> = (0..c.len()).filter(|&i| mask & (1 << i) != 0).map(|i| &c[i]).collect();
        if is_subsequence(&sub, r) {
            best = n;
        }
    }
    best
}

pub fn rouge_l(c: &[String], r: &[String]) -> f64 {
    harmonic(lcs(c, r), c.len(), r.len())
}

fn grams(s: &[String], n: usize) -> Vec<Vec<String>> {
    if s.len() < n {
        return Vec::new();
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

pub fn bleu(c: &[String], r: &[String]) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let cg = grams(c, n);
        let rg = grams(r, n);
        let mut distinct: Vec<&Vec<String>> = Vec::new();
        for g in &cg {
            if !distinct.contains(&g) {
                distinct.push(g);
            }
        }
        let clipped: usize = distinct
            .iter()
            .map(|g| {
                let in_c = cg.iter().filter(|x| x == g).count();
                let in_r = rg.iter().filter(|x| x == g).count();
                in_c.min(in_r)
            })
            .sum();
        let p = match (clipped, n) {
            (0, 1) => return 0.0,
            (0, _) => 1.0 / (cg.len() as f64 + 1.0),
            (m, _) => m as f64 / cg.len() as f64,
        };
        product *= p;
    }
    let bp = if c.len() < r.len() { (1.0 - r.len() as f64 / c.len() as f64).exp() } else { 1.0 };
    bp * product.powf(0.25)
}

/// Exact-match METEOR with alpha 0.9, gamma 0.5, beta 3.
pub fn meteor(c: &[String], r: &[String]) -> f64 {
    // k-th occurrence in the candidate aligns to the k-th in the reference.
    let mut pairs = Vec::new();
    for i in 0..c.len() {
        let k = c[..i].iter().filter(|w| **w == c[i]).count();
        let mut seen = 0;
        for (j, w) in r.iter().enumerate() {
            if *w == c[i] {
                if seen == k {
                    pairs.push((i, j));
                    break;
                }
                seen += 1;
            }
        }
    }
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        let continues = idx > 0 && pairs[idx - 1] == (i.wrapping_sub(1), j.wrapping_sub(1));
        if !continues {
            chunks += 1;
        }
    }
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
    let frag = chunks as f64 / m as f64;
    f_mean * (1.0 - 0.5 * frag * frag * frag)
}
