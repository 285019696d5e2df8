//! Damerau–Levenshtein distance and a BK-tree for bounded-distance lookups.
//!
//! This is the unrestricted variant (adjacent transpositions may be edited
//! further), so it is a true metric and the BK-tree triangle-inequality
//! pruning is exact.

use std::collections::HashMap;

/// Unrestricted Damerau–Levenshtein distance over Unicode scalar values.
pub fn damerau_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    dl_chars(&a, &b)
}

pub(crate) fn dl_chars(a: &[char], b: &[char]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let inf = n + m;
    let w = m + 2;
    // (n+2) x (m+2) table with a sentinel row/column of `inf`
    let mut d = vec![0usize; (n + 2) * w];
    d[0] = inf;
    for i in 0..=n {
        d[(i + 1) * w] = inf;
        d[(i + 1) * w + 1] = i;
    }
    for j in 0..=m {
        d[j + 1] = inf;
        d[w + j + 1] = j;
    }
    let mut last_row: HashMap<char, usize> = HashMap::new();
    for i in 1..=n {
        let mut last_match_col = 0;
        for j in 1..=m {
            let i1 = last_row.get(&b[j - 1]).copied().unwrap_or(0);
            let j1 = last_match_col;
            let cost = if a[i - 1] == b[j - 1] {
                last_match_col = j;
                0
            } else {
                1
            };
            let sub = d[i * w + j] + cost;
            let ins = d[(i + 1) * w + j] + 1;
            let del = d[i * w + j + 1] + 1;
            let trans = d[i1 * w + j1] + (i - i1 - 1) + 1 + (j - j1 - 1);
            d[(i + 1) * w + j + 1] = sub.min(ins).min(del).min(trans);
        }
        last_row.insert(a[i - 1], i);
    }
    d[(n + 1) * w + m + 1]
}

struct Node {
    word: usize,
    children: Vec<(usize, usize)>,
}

/// Burkhard–Keller tree over a word list.
pub struct BkTree {
    words: Vec<Vec<char>>,
    nodes: Vec<Node>,
}

impl BkTree {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut tree = BkTree {
            words: Vec::new(),
            nodes: Vec::new(),
        };
        for w in words {
            tree.insert(w.as_ref());
        }
        tree
    }

    fn insert(&mut self, word: &str) {
        let chars: Vec<char> = word.chars().collect();
        let id = self.words.len();
        if self.nodes.is_empty() {
            self.words.push(chars);
            self.nodes.push(Node {
                word: id,
                children: Vec::new(),
            });
            return;
        }
        let mut cur = 0;
        loop {
            let d = dl_chars(&self.words[self.nodes[cur].word], &chars);
            if d == 0 {
                return;
            }
            match self.nodes[cur].children.iter().find(|(k, _)| *k == d) {
                Some(&(_, child)) => cur = child,
                None => {
                    self.words.push(chars);
                    let node = self.nodes.len();
                    self.nodes.push(Node {
                        word: id,
                        children: Vec::new(),
                    });
                    self.nodes[cur].children.push((d, node));
                    return;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// All stored words within `max_dist` of `query`, with their distances (unordered).
    pub fn find(&self, query: &str, max_dist: usize) -> Vec<(String, usize)> {
        let q: Vec<char> = query.chars().collect();
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let word = &self.words[node.word];
            let d = dl_chars(word, &q);
            if d <= max_dist {
                out.push((word.iter().collect(), d));
            }
            let lo = d.saturating_sub(max_dist);
            let hi = d + max_dist;
            stack.extend(
                node.children
                    .iter()
                    .filter(|(k, _)| (lo..=hi).contains(k))
                    .map(|(_, c)| *c),
            );
        }
        out
    }
}
