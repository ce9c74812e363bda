//! Merging edition and medium variants of one title into a canonical item.
//!
//! Titles and creators are normalized, the distinct (title, creator) rows are
//! sorted, and every row is compared with the rows that follow it inside a
//! fixed window. Two rows pair when their edition numbers agree and both
//! fields are within the edit-distance limit, the title being compared with
//! its edition token removed. Pairs are closed transitively.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of succeeding rows each row is compared with.
pub const DEFAULT_WINDOW: usize = 10;
/// Largest per-field edit distance for two rows to pair.
pub const DEFAULT_MAX_EDIT: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_key: String,
    pub title: String,
    pub creator: String,
}

impl ItemRecord {
    pub fn new(item_key: impl Into<String>, title: impl Into<String>, creator: impl Into<String>) -> Self {
        ItemRecord {
            item_key: item_key.into(),
            title: title.into(),
            creator: creator.into(),
        }
    }
}

/// Normalized comparison fields of a title.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RawItem {
    pub title_norm: String,
    pub creator_norm: String,
    /// Trailing edition number of at most two digits.
    pub digit_token: Option<String>,
}

impl RawItem {
    /// Edition number, with a missing token read as edition 1.
    pub fn edition(&self) -> u32 {
        self.digit_token
            .as_deref()
            .map_or(1, |t| t.parse().expect("digit token is numeric"))
    }

    /// The normalized title with the edition token cut out. Edition numbers
    /// are compared by [`RawItem::edition`], so they do not count as edits.
    pub fn title_stem(&self) -> String {
        if self.digit_token.is_none() {
            return self.title_norm.clone();
        }
        let end = self
            .title_norm
            .rfind(|c: char| c.is_ascii_digit())
            .expect("token present")
            + 1;
        let start = self.title_norm[..end]
            .rfind(|c: char| !c.is_ascii_digit())
            .map_or(0, |i| i + 1);
        let mut stem = String::with_capacity(self.title_norm.len());
        stem.push_str(self.title_norm[..start].trim_end());
        let rest = self.title_norm[end..].trim_start();
        if !stem.is_empty() && !rest.is_empty() {
            stem.push(' ');
        }
        stem.push_str(rest);
        stem
    }

    /// True when normalization left nothing of the title.
    pub fn is_blank(&self) -> bool {
        self.title_norm.is_empty()
    }
}

/// Lowercases, drops every character that is not a letter, digit or
/// whitespace, and collapses whitespace runs to single spaces.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// The last maximal digit run of a normalized title, if it has at most two
/// digits and no run in the title is longer than two.
pub fn digit_token(title_norm: &str) -> Option<String> {
    let mut last: Option<&str> = None;
    let mut start = None;
    for (i, c) in title_norm.char_indices().chain(std::iter::once((title_norm.len(), ' '))) {
        match (c.is_ascii_digit(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let run = &title_norm[s..i];
                if run.len() > 2 {
                    return None;
                }
                last = Some(run);
                start = None;
            }
            _ => {}
        }
    }
    last.map(str::to_string)
}

pub fn normalize(title: &str, creator: &str) -> RawItem {
    let title_norm = normalize_text(title);
    let digit_token = digit_token(&title_norm);
    RawItem {
        creator_norm: normalize_text(creator),
        title_norm,
        digit_token,
    }
}

/// Levenshtein distance with unit costs, or `None` once it exceeds `max`.
pub fn bounded_levenshtein(a: &[char], b: &[char], max: usize) -> Option<usize> {
    let (a, b) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if b.len() - a.len() > max {
        return None;
    }
    if max == 1 {
        return within_one(a, b);
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, cb) in b.iter().enumerate() {
        cur[0] = j + 1;
        let mut row_min = cur[0];
        for (i, ca) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ca != cb);
            cur[i + 1] = sub.min(prev[i + 1] + 1).min(cur[i] + 1);
            row_min = row_min.min(cur[i + 1]);
        }
        if row_min > max {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[a.len()];
    (d <= max).then_some(d)
}

// `a` is the shorter string.
fn within_one(a: &[char], b: &[char]) -> Option<usize> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    if prefix == a.len() && a.len() == b.len() {
        return Some(0);
    }
    let rest_equal = if a.len() == b.len() {
        a[prefix + 1..] == b[prefix + 1..]
    } else {
        a[prefix..] == b[prefix + 1..]
    };
    rest_equal.then_some(1)
}

struct Row {
    title: Vec<char>,
    creator: Vec<char>,
    edition: u32,
}

/// Index pairs `(i, j)`, `i < j <= i + window`, of rows that may be the same
/// title. `items` must be sorted by `(title_norm, creator_norm)`.
pub fn candidate_pairs(items: &[RawItem], window: usize, max_edit: usize) -> Vec<(usize, usize)> {
    let rows: Vec<Row> = items
        .par_iter()
        .map(|it| Row {
            title: it.title_stem().chars().collect(),
            creator: it.creator_norm.chars().collect(),
            edition: it.edition(),
        })
        .collect();
    rows.par_iter()
        .enumerate()
        .flat_map_iter(|(i, a)| {
            let rows = &rows;
            (i + 1..rows.len().min(i + 1 + window)).filter_map(move |j| {
                let b = &rows[j];
                let paired = a.edition == b.edition
                    && bounded_levenshtein(&a.title, &b.title, max_edit).is_some()
                    && bounded_levenshtein(&a.creator, &b.creator, max_edit).is_some();
                paired.then_some((i, j))
            })
        })
        .collect()
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Partition of item keys into canonical items. The canonical id of a group
/// is its lexicographically smallest item key.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CanonicalCatalog {
    mapping: HashMap<String, String>,
    groups: BTreeMap<String, Vec<String>>,
}

impl CanonicalCatalog {
    /// Closes `pairs` over `keys` transitively. Keys never mentioned in a pair
    /// become singleton groups.
    pub fn from_pairs<'a>(keys: impl IntoIterator<Item = &'a str>, pairs: &[(&'a str, &'a str)]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names: Vec<&str> = Vec::new();
        let all = keys.into_iter().chain(pairs.iter().flat_map(|&(a, b)| [a, b]));
        for k in all {
            index.entry(k).or_insert_with(|| {
                names.push(k);
                names.len() - 1
            });
        }
        let mut sets = DisjointSet::new(names.len());
        for &(a, b) in pairs {
            sets.union(index[a], index[b]);
        }
        let mut by_root: HashMap<usize, Vec<String>> = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            by_root.entry(sets.find(i)).or_default().push(name.to_string());
        }
        CanonicalCatalog::from_groups(by_root.into_values())
    }

    fn from_groups(groups: impl IntoIterator<Item = Vec<String>>) -> Self {
        let mut mapping = HashMap::new();
        let mut out = BTreeMap::new();
        for mut members in groups {
            members.sort();
            members.dedup();
            let canonical = members[0].clone();
            for m in &members {
                mapping.insert(m.clone(), canonical.clone());
            }
            out.insert(canonical, members);
        }
        CanonicalCatalog {
            mapping,
            groups: out,
        }
    }

    /// Every key maps to itself.
    pub fn identity<'a>(keys: impl IntoIterator<Item = &'a str>) -> Self {
        CanonicalCatalog::from_groups(keys.into_iter().map(|k| vec![k.to_string()]))
    }

    pub fn canonical_of(&self, item_key: &str) -> Option<&str> {
        self.mapping.get(item_key).map(String::as_str)
    }

    /// Canonical id of a key, or the key itself when the catalog lacks it.
    pub fn resolve<'a>(&'a self, item_key: &'a str) -> &'a str {
        self.canonical_of(item_key).unwrap_or(item_key)
    }

    pub fn n_items(&self) -> usize {
        self.mapping.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Groups keyed by canonical id, members sorted.
    pub fn groups(&self) -> &BTreeMap<String, Vec<String>> {
        &self.groups
    }

    /// `(item_key, canonical_id)` sorted by item key.
    pub fn sorted_mapping(&self) -> Vec<(&str, &str)> {
        let mut v: Vec<_> = self
            .mapping
            .iter()
            .map(|(k, c)| (k.as_str(), c.as_str()))
            .collect();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonConfig {
    pub window: usize,
    pub max_edit: usize,
}

impl Default for CanonConfig {
    fn default() -> Self {
        CanonConfig {
            window: DEFAULT_WINDOW,
            max_edit: DEFAULT_MAX_EDIT,
        }
    }
}

/// Runs the full heuristic over an item table.
///
/// The first record of a repeated item key wins. Keys sharing a normalized
/// (title, creator) row always land in one group; the sliding window runs
/// over distinct rows.
pub fn canonicalize(records: &[ItemRecord], config: CanonConfig) -> CanonicalCatalog {
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(records.len());
    let mut rows: HashMap<RawItem, Vec<&str>> = HashMap::new();
    for r in records {
        if seen.insert(&r.item_key, ()).is_some() {
            continue;
        }
        rows.entry(normalize(&r.title, &r.creator))
            .or_default()
            .push(&r.item_key);
    }
    let mut rows: Vec<(RawItem, Vec<&str>)> = rows.into_iter().collect();
    rows.par_sort_unstable_by(|a, b| {
        (&a.0.title_norm, &a.0.creator_norm, &a.0.digit_token)
            .cmp(&(&b.0.title_norm, &b.0.creator_norm, &b.0.digit_token))
    });
    let items: Vec<RawItem> = rows.iter().map(|(r, _)| r.clone()).collect();
    let pairs = candidate_pairs(&items, config.window, config.max_edit);

    let mut sets = DisjointSet::new(rows.len());
    for (a, b) in pairs {
        sets.union(a, b);
    }
    let mut by_root: HashMap<usize, Vec<String>> = HashMap::new();
    for (i, (_, keys)) in rows.iter().enumerate() {
        by_root
            .entry(sets.find(i))
            .or_default()
            .extend(keys.iter().map(|k| k.to_string()));
    }
    CanonicalCatalog::from_groups(by_root.into_values())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn normalization() {
        let a = normalize("Ternet Ninja!", "Anders Matthesen");
        assert_eq!(a.title_norm, "ternet ninja");
        assert_eq!(a.digit_token, None);
        let b = normalize("Ternet Ninja 1", "Anders Matthesen");
        assert_eq!(b.title_norm, "ternet ninja 1");
        assert_eq!(b.digit_token.as_deref(), Some("1"));
        assert_eq!(a.edition(), b.edition());
        assert_eq!(normalize("HARRY  POTTER", "").title_norm, "harry potter");
        assert_eq!(normalize("  «Ærø: Øen» ", "").title_norm, "ærø øen");
        assert!(normalize("?!", "").is_blank());
    }

    #[test]
    fn title_stems() {
        assert_eq!(normalize("Ternet Ninja 1", "").title_stem(), "ternet ninja");
        assert_eq!(normalize("Book 2 part 12", "").title_stem(), "book 2 part");
        assert_eq!(normalize("Ternet Ninja 2 (lydbog)", "").title_stem(), "ternet ninja lydbog");
        assert_eq!(normalize("Volume2", "").title_stem(), "volume");
        assert_eq!(normalize("1984", "").title_stem(), "1984");
        assert_eq!(normalize("7", "").title_stem(), "");
    }

    #[test]
    fn digit_tokens() {
        assert_eq!(digit_token("book 2 part 12").as_deref(), Some("12"));
        assert_eq!(digit_token("1984"), None);
        assert_eq!(digit_token("2 years of 1984"), None);
        assert_eq!(digit_token("agent 007"), None);
        assert_eq!(digit_token("volume2"), Some("2".into()));
        assert_eq!(digit_token("no digits"), None);
    }

    #[test]
    fn levenshtein_fast_path_matches_dp() {
        let words = ["", "a", "ab", "ba", "abc", "abd", "xabc", "abcx", "acb", "annas sang", "anna s sang"];
        for x in words {
            for y in words {
                let full = bounded_levenshtein(&chars(x), &chars(y), 100);
                let one = bounded_levenshtein(&chars(x), &chars(y), 1);
                assert_eq!(one, full.filter(|&d| d <= 1), "{x:?} {y:?}");
            }
        }
        assert_eq!(bounded_levenshtein(&chars("kitten"), &chars("sitting"), 5), Some(3));
        assert_eq!(bounded_levenshtein(&chars("kitten"), &chars("sitting"), 2), None);
    }

    #[test]
    fn pairing_rules() {
        let pair = |t1: &str, t2: &str| {
            let mut items = vec![normalize(t1, "Author"), normalize(t2, "Author")];
            items.sort();
            !candidate_pairs(&items, 10, 1).is_empty()
        };
        assert!(pair("Ternet Ninja", "Ternet Ninja 1"));
        assert!(!pair("Ternet Ninja 1", "Ternet Ninja 2"));
        assert!(pair("Anna s Sang", "Annas Sang"));
        assert!(!pair("Anna s Sang", "Hannas Sange"));

        let mut items = vec![normalize("Book", "Smith"), normalize("Book", "Smyth2")];
        items.sort();
        assert!(candidate_pairs(&items, 10, 1).is_empty());
    }

    #[test]
    fn window_limits_comparisons() {
        let mut items: Vec<RawItem> = (0..12).map(|i| normalize(&format!("t{i:02}xx"), "")).collect();
        items.insert(0, normalize("t00x", ""));
        items.sort();
        let pairs = candidate_pairs(&items, 10, 1);
        assert!(pairs.iter().all(|&(i, j)| j > i && j - i <= 10));
    }

    #[test]
    fn closure_is_transitive() {
        let cat = CanonicalCatalog::from_pairs(["a", "b", "c", "d"], &[("a", "b"), ("b", "c")]);
        assert_eq!(cat.n_groups(), 2);
        assert_eq!(cat.canonical_of("c"), Some("a"));
        assert_eq!(cat.canonical_of("d"), Some("d"));
        assert_eq!(cat.groups()["a"], vec!["a", "b", "c"]);

        let singles = CanonicalCatalog::from_pairs(["x", "y", "z"], &[]);
        assert_eq!(singles.n_groups(), 3);
    }

    #[test]
    fn variants_merge_and_canonical_is_smallest_key() {
        let records = vec![
            ItemRecord::new("f300", "Ternet Ninja", "Anders Matthesen"),
            ItemRecord::new("f100", "Ternet Ninja 1", "Anders Matthesen"),
            ItemRecord::new("f200", "Ternet ninja!", "Anders Matthesen"),
            ItemRecord::new("f400", "Ternet Ninja 2", "Anders Matthesen"),
            ItemRecord::new("f500", "Ternet Ninja 2 (lydbog)", "Anders Matthesen"),
        ];
        let cat = canonicalize(&records, CanonConfig::default());
        assert_eq!(cat.resolve("f300"), "f100");
        assert_eq!(cat.resolve("f200"), "f100");
        assert_eq!(cat.resolve("f400"), "f400");
        assert_eq!(cat.resolve("f500"), "f500");
        assert_eq!(cat.resolve("unknown"), "unknown");
        assert_eq!(cat.n_items(), 5);
    }

    proptest::proptest! {
        #[test]
        fn partition_invariants(
            titles in proptest::collection::vec(("[ab]{1,4}( [12])?", "[xy]{1,2}"), 1..40),
            seed in 0u64..1000,
        ) {
            let records: Vec<ItemRecord> = titles
                .iter()
                .enumerate()
                .map(|(i, (t, c))| ItemRecord::new(format!("k{i:03}"), t.clone(), c.clone()))
                .collect();
            let cat = canonicalize(&records, CanonConfig::default());
            // Partition: every key exactly once.
            let mut members: Vec<&String> = cat.groups().values().flatten().collect();
            members.sort();
            members.dedup();
            proptest::prop_assert_eq!(members.len(), records.len());
            proptest::prop_assert!(cat.n_groups() <= records.len());
            for (canon, group) in cat.groups() {
                proptest::prop_assert_eq!(canon, &group[0]);
            }
            // Input order does not matter.
            let mut shuffled = records.clone();
            let n = shuffled.len();
            for i in 0..n {
                shuffled.swap(i, (seed as usize * 31 + i * 17) % n);
            }
            proptest::prop_assert_eq!(canonicalize(&shuffled, CanonConfig::default()), cat);
        }
    }
}
