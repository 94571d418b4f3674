//! CoNLL-U ingestion and gold tree structure.
//!
//! Only syntactic words are kept: multiword-token ranges (`3-4`) and empty
//! nodes (`5.1`) are skipped. Tree distances are path lengths in the
//! undirected gold tree and are computed once at parse time.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use crate::error::{Error, Result};

/// Longest sentence accepted by the reader.
pub const MAX_SENTENCE_LEN: usize = 512;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub upos: String,
    pub xpos: String,
    /// Head position, `0` for ROOT.
    pub head: usize,
    pub deprel: String,
    pub is_punct: bool,
}

/// A parsed sentence with its pairwise tree distances.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceParse {
    pub tokens: Vec<Token>,
    distances: Vec<u16>,
    gold_edges: BTreeSet<(usize, usize)>,
}

impl SentenceParse {
    /// Builds a parse from tokens, validating the head structure.
    ///
    /// `sentence` is only used in error messages.
    pub fn from_tokens(tokens: Vec<Token>, sentence: usize) -> Result<Self> {
        let n = tokens.len();
        if n == 0 {
            return Err(Error::Structure {
                sentence,
                message: "sentence has no tokens".into(),
            });
        }
        if n > MAX_SENTENCE_LEN {
            return Err(Error::Structure {
                sentence,
                message: format!("{n} tokens exceeds the limit of {MAX_SENTENCE_LEN}"),
            });
        }
        for (pos, tok) in tokens.iter().enumerate() {
            if tok.index != pos + 1 {
                return Err(Error::Structure {
                    sentence,
                    message: format!("token ids not contiguous at position {}", pos + 1),
                });
            }
            if tok.head > n || tok.head == tok.index {
                return Err(Error::Structure {
                    sentence,
                    message: format!("token {} has invalid head {}", tok.index, tok.head),
                });
            }
        }
        check_acyclic(&tokens, sentence)?;

        let roots = tokens.iter().filter(|t| t.head == 0).count();
        if roots != 1 {
            log::warn!("sentence {sentence} has {roots} root attachments");
        }
        if !is_projective(&tokens) {
            log::warn!("sentence {sentence} is non-projective");
        }

        let gold_edges = tokens
            .iter()
            .filter(|t| t.head != 0)
            .map(|t| ordered(t.index, t.head))
            .collect();
        let distances = bfs_distances(&tokens);
        Ok(SentenceParse {
            tokens,
            distances,
            gold_edges,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tree distance between 1-based token indices `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> u16 {
        let n = self.len();
        self.distances[(i - 1) * n + (j - 1)]
    }

    /// Distances as a row-major `N x N` slice, 0-based.
    pub fn distance_matrix(&self) -> &[u16] {
        &self.distances
    }

    /// Non-root gold edges as `(lower, higher)` 1-based index pairs.
    pub fn gold_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.gold_edges
    }

    pub fn heads(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.head).collect()
    }

    pub fn punct_mask(&self) -> Vec<bool> {
        self.tokens.iter().map(|t| t.is_punct).collect()
    }

    pub fn forms(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.form.as_str()).collect()
    }

    pub fn root_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.head == 0).count()
    }
}

pub(crate) fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_acyclic(tokens: &[Token], sentence: usize) -> Result<()> {
    let n = tokens.len();
    for start in 1..=n {
        let mut cur = start;
        let mut steps = 0;
        while cur != 0 {
            cur = tokens[cur - 1].head;
            steps += 1;
            if steps > n {
                return Err(Error::Structure {
                    sentence,
                    message: format!("cyclic head assignment through token {start}"),
                });
            }
        }
    }
    Ok(())
}

fn is_projective(tokens: &[Token]) -> bool {
    let arcs: Vec<(usize, usize)> = tokens
        .iter()
        .filter(|t| t.head != 0)
        .map(|t| ordered(t.index, t.head))
        .collect();
    for &(a, b) in &arcs {
        for &(c, d) in &arcs {
            if a < c && c < b && b < d {
                return false;
            }
        }
    }
    true
}

/// All-pairs distances by BFS from every token over the undirected tree.
///
/// A virtual ROOT node keeps multi-rooted outputs connected; with a single
/// root it never lies on a shortest word-to-word path.
fn bfs_distances(tokens: &[Token]) -> Vec<u16> {
    let n = tokens.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for t in tokens {
        adj[t.index].push(t.head);
        adj[t.head].push(t.index);
    }
    let mut out = vec![0u16; n * n];
    let mut dist = vec![u16::MAX; n + 1];
    let mut queue = VecDeque::with_capacity(n + 1);
    for src in 1..=n {
        dist.iter_mut().for_each(|d| *d = u16::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == u16::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for dst in 1..=n {
            out[(src - 1) * n + (dst - 1)] = dist[dst];
        }
    }
    out
}

/// Tree distance between tokens `i` and `j` (1-based).
pub fn tree_distance(parse: &SentenceParse, i: usize, j: usize) -> u16 {
    parse.distance(i, j)
}

/// All unordered pairs `(i, j)`, `i < j`, whose XPOS tags are equal.
pub fn same_xpos_pairs(parse: &SentenceParse) -> Vec<(usize, usize)> {
    let toks = &parse.tokens;
    let mut pairs = Vec::new();
    for a in 0..toks.len() {
        for b in a + 1..toks.len() {
            if toks[a].xpos == toks[b].xpos {
                pairs.push((toks[a].index, toks[b].index));
            }
        }
    }
    pairs
}

/// Parses a CoNLL-U document into one [`SentenceParse`] per sentence block.
pub fn parse_conllu(text: &str) -> Result<Vec<SentenceParse>> {
    let mut out = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let flush = |current: &mut Vec<Token>, out: &mut Vec<SentenceParse>| -> Result<()> {
        if !current.is_empty() {
            let sentence = out.len();
            out.push(SentenceParse::from_tokens(std::mem::take(current), sentence)?);
        }
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut current, &mut out)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Conllu {
                line: line_no,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let index: usize = id.parse().map_err(|_| Error::Conllu {
            line: line_no,
            message: format!("invalid token id {id:?}"),
        })?;
        if index != current.len() + 1 {
            return Err(Error::Conllu {
                line: line_no,
                message: format!("token id {index} out of sequence"),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| Error::Conllu {
            line: line_no,
            message: format!("invalid head {:?}", cols[6]),
        })?;
        let upos = cols[3].to_string();
        current.push(Token {
            index,
            form: cols[1].to_string(),
            is_punct: upos == "PUNCT",
            upos,
            xpos: cols[4].to_string(),
            head,
            deprel: cols[7].to_string(),
        });
    }
    flush(&mut current, &mut out)?;
    Ok(out)
}

pub fn read_conllu(path: impl AsRef<Path>) -> Result<Vec<SentenceParse>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text)
}

/// Serializes parses back to CoNLL-U (unused columns written as `_`).
pub fn write_conllu(parses: &[SentenceParse]) -> String {
    let mut s = String::new();
    for p in parses {
        for t in &p.tokens {
            s.push_str(&format!(
                "{}\t{}\t_\t{}\t{}\t_\t{}\t{}\t_\t_\n",
                t.index, t.form, t.upos, t.xpos, t.head, t.deprel
            ));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRINTS: &str = "\
# text = The prints of every vase aggravate Nina.
1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_
2\tprints\tprint\tNOUN\tNNS\t_\t6\tnsubj\t_\t_
3\tof\tof\tADP\tIN\t_\t5\tcase\t_\t_
4\tevery\tevery\tDET\tDT\t_\t5\tdet\t_\t_
5\tvase\tvase\tNOUN\tNN\t_\t2\tnmod\t_\t_
6\taggravate\taggravate\tVERB\tVBP\t_\t0\troot\t_\t_
7\tNina\tNina\tPROPN\tNNP\t_\t6\tobj\t_\t_
8\t.\t.\tPUNCT\t.\t_\t6\tpunct\t_\t_
";

    fn floyd_warshall(p: &SentenceParse) -> Vec<u32> {
        let n = p.len();
        let inf = u32::MAX / 4;
        let mut d = vec![inf; n * n];
        for i in 0..n {
            d[i * n + i] = 0;
        }
        for &(a, b) in p.gold_edges() {
            d[(a - 1) * n + (b - 1)] = 1;
            d[(b - 1) * n + (a - 1)] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i * n + k] + d[k * n + j];
                    if via < d[i * n + j] {
                        d[i * n + j] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn two_token_sentence() {
        let doc = "1\tDogs\t_\tNOUN\tNNS\t_\t2\tnsubj\t_\t_\n2\tbark\t_\tVERB\tVBP\t_\t0\troot\t_\t_\n";
        let parses = parse_conllu(doc).unwrap();
        assert_eq!(parses.len(), 1);
        let p = &parses[0];
        assert_eq!(p.gold_edges().iter().copied().collect::<Vec<_>>(), vec![(1, 2)]);
        assert_eq!(tree_distance(p, 1, 2), 1);
        assert_eq!(tree_distance(p, 2, 2), 0);
    }

    #[test]
    fn punctuation_flag_follows_upos() {
        let p = &parse_conllu(PRINTS).unwrap()[0];
        assert!(p.tokens[7].is_punct);
        assert!(!p.tokens[0].is_punct);
    }

    #[test]
    fn distance_from_the_to_nina() {
        let p = &parse_conllu(PRINTS).unwrap()[0];
        assert_eq!(tree_distance(p, 1, 7), 3);
        assert_eq!(p.gold_edges().len(), p.len() - 1);
        assert_eq!(p.root_count(), 1);
    }

    #[test]
    fn multiword_and_empty_nodes_are_skipped() {
        let doc = "\
1\tI\t_\tPRON\tPRP\t_\t2\tnsubj\t_\t_
2\twant\t_\tVERB\tVBP\t_\t0\troot\t_\t_
3-4\tgonna\t_\t_\t_\t_\t_\t_\t_\t_
3\tgon\t_\tVERB\tVBG\t_\t2\txcomp\t_\t_
4\tna\t_\tPART\tTO\t_\t5\tmark\t_\t_
4.1\tgo\t_\tVERB\tVB\t_\t_\t_\t_\t_
5\tleave\t_\tVERB\tVB\t_\t3\txcomp\t_\t_
";
        let p = &parse_conllu(doc).unwrap()[0];
        let idx: Vec<usize> = p.tokens.iter().map(|t| t.index).collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 5]);
        assert_eq!(p.tokens[2].form, "gon");
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let doc = "1\tDogs\t_\tNOUN\tNNS\t_\t2\tnsubj\t_\t_\n2\tbark\tVERB\n";
        match parse_conllu(doc) {
            Err(Error::Conllu { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_is_a_structure_error() {
        let doc = "\
1\ta\t_\tX\tX\t_\t2\tdep\t_\t_
2\tb\t_\tX\tX\t_\t1\tdep\t_\t_
3\tc\t_\tX\tX\t_\t0\troot\t_\t_

";
        let doc = format!("{PRINTS}\n{doc}");
        match parse_conllu(&doc) {
            Err(Error::Structure { sentence, .. }) => assert_eq!(sentence, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn xpos_pairs() {
        let mk = |xs: &[&str]| {
            let toks = xs
                .iter()
                .enumerate()
                .map(|(i, x)| Token {
                    index: i + 1,
                    form: format!("w{i}"),
                    upos: "X".into(),
                    xpos: x.to_string(),
                    head: if i == 0 { 0 } else { 1 },
                    deprel: "dep".into(),
                    is_punct: false,
                })
                .collect();
            SentenceParse::from_tokens(toks, 0).unwrap()
        };
        assert!(same_xpos_pairs(&mk(&["DT", "NN", "VBD"])).is_empty());
        assert_eq!(same_xpos_pairs(&mk(&["NN", "NN", "NN"])).len(), 3);
        // brute force: NNS at 2,4; VBD at 3,5
        let p = mk(&["DT", "NNS", "VBD", "NNS", "VBD", "IN"]);
        assert_eq!(same_xpos_pairs(&p), vec![(2, 4), (3, 5)]);
    }

    #[test]
    fn bfs_matches_floyd_warshall_on_fixture() {
        let p = &parse_conllu(PRINTS).unwrap()[0];
        let fw = floyd_warshall(p);
        for (a, b) in p.distance_matrix().iter().zip(&fw) {
            assert_eq!(*a as u32, *b);
        }
    }

    #[test]
    fn roundtrip_through_writer() {
        let parses = parse_conllu(PRINTS).unwrap();
        let again = parse_conllu(&write_conllu(&parses)).unwrap();
        assert_eq!(parses[0].heads(), again[0].heads());
        assert_eq!(parses[0].distance_matrix(), again[0].distance_matrix());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_tree() -> impl Strategy<Value = SentenceParse> {
            (1usize..=12)
                .prop_flat_map(|n| (Just(n), proptest::collection::vec(any::<u32>(), 2 * n)))
                .prop_map(|(n, draws)| {
                    let (shuffle, picks) = draws.split_at(n);
                    let mut order: Vec<usize> = (1..=n).collect();
                    for i in (1..n).rev() {
                        let j = shuffle[i] as usize % (i + 1);
                        order.swap(i, j);
                    }
                    (n, picks.to_vec(), order)
                })
                .prop_map(|(n, picks, order)| {
                    let mut heads = vec![0usize; n + 1];
                    for (k, &tok) in order.iter().enumerate().skip(1) {
                        heads[tok] = order[picks[k] as usize % k];
                    }
                    let toks = (1..=n)
                        .map(|i| Token {
                            index: i,
                            form: format!("w{i}"),
                            upos: "X".into(),
                            xpos: "X".into(),
                            head: heads[i],
                            deprel: "dep".into(),
                            is_punct: false,
                        })
                        .collect();
                    SentenceParse::from_tokens(toks, 0).unwrap()
                })
        }

        proptest! {
            #[test]
            fn bfs_equals_floyd_warshall(p in random_tree()) {
                let fw = floyd_warshall(&p);
                for (a, b) in p.distance_matrix().iter().zip(&fw) {
                    prop_assert_eq!(*a as u32, *b);
                }
            }

            #[test]
            fn distances_form_a_tree_metric(p in random_tree()) {
                let n = p.len();
                prop_assert_eq!(p.gold_edges().len(), n - p.root_count());
                prop_assert_eq!(p.root_count(), 1);
                for i in 1..=n {
                    prop_assert_eq!(p.distance(i, i), 0);
                    for j in 1..=n {
                        prop_assert_eq!(p.distance(i, j), p.distance(j, i));
                        let adjacent = p.gold_edges().contains(&ordered(i, j));
                        prop_assert_eq!(p.distance(i, j) == 1, adjacent);
                        for k in 1..=n {
                            prop_assert!(p.distance(i, j) <= p.distance(i, k) + p.distance(k, j));
                        }
                    }
                }
            }
        }
    }
}
