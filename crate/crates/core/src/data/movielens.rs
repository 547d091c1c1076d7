//! Raw MovieLens-100k reader (`u.data`, `u.user`, `u.item`).

use std::collections::BTreeMap;
use std::path::Path;

use super::{decl, read_bytes, read_text, DataError, Dataset};
use crate::hin::build_hin;

/// Genre columns of `u.item`, in file order.
pub const GENRES: [&str; 19] = [
    "unknown",
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// Age groups used by the MovieLens demographics.
pub const AGE_GROUPS: [&str; 9] = [
    "<18", "18-24", "25-29", "30-34", "35-39", "40-44", "45-49", "50-55", "56+",
];

pub fn age_group(age: u32) -> &'static str {
    match age {
        0..=17 => AGE_GROUPS[0],
        18..=24 => AGE_GROUPS[1],
        25..=29 => AGE_GROUPS[2],
        30..=34 => AGE_GROUPS[3],
        35..=39 => AGE_GROUPS[4],
        40..=44 => AGE_GROUPS[5],
        45..=49 => AGE_GROUPS[6],
        50..=55 => AGE_GROUPS[7],
        _ => AGE_GROUPS[8],
    }
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> DataError {
    DataError::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn field<'a>(fields: &[&'a str], i: usize, path: &Path, line: usize) -> Result<&'a str, DataError> {
    fields
        .get(i)
        .map(|f| f.trim())
        .ok_or_else(|| malformed(path, line, format!("expected at least {} fields, got {}", i + 1, fields.len())))
}

fn number<N: std::str::FromStr>(text: &str, what: &str, path: &Path, line: usize) -> Result<N, DataError> {
    text.parse()
        .map_err(|_| malformed(path, line, format!("bad {what} {text:?}")))
}

/// Reads an ml-100k directory. Ratings `>= rating_threshold` become
/// interactions; the default threshold 0 keeps them all.
pub fn load_movielens(dir: &Path, rating_threshold: f64) -> Result<Dataset, DataError> {
    let ratings_path = dir.join("u.data");
    let users_path = dir.join("u.user");
    let items_path = dir.join("u.item");

    let mut users: BTreeMap<u32, (String, String)> = BTreeMap::new();
    for (i, raw) in read_text(&users_path)?.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split('|').collect();
        if f.len() != 5 {
            return Err(malformed(&users_path, line, format!("expected 5 fields, got {}", f.len())));
        }
        let id: u32 = number(f[0].trim(), "user id", &users_path, line)?;
        let age: u32 = number(f[1].trim(), "age", &users_path, line)?;
        users.insert(id, (age_group(age).to_string(), f[3].trim().to_string()));
    }

    // u.item is Latin-1; only the id and the genre flags are read.
    let item_bytes = read_bytes(&items_path)?;
    let item_text = String::from_utf8_lossy(&item_bytes);
    let mut items: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, raw) in item_text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split('|').collect();
        if f.len() < 5 + GENRES.len() {
            return Err(malformed(
                &items_path,
                line,
                format!("expected {} fields, got {}", 5 + GENRES.len(), f.len()),
            ));
        }
        let id: u32 = number(f[0].trim(), "movie id", &items_path, line)?;
        let flags = &f[f.len() - GENRES.len()..];
        let mut genres = Vec::new();
        for (g, flag) in flags.iter().enumerate() {
            match flag.trim() {
                "1" => genres.push(g),
                "0" => {}
                other => return Err(malformed(&items_path, line, format!("bad genre flag {other:?}"))),
            }
        }
        items.insert(id, genres);
    }

    let mut ratings = Vec::new();
    for (i, raw) in read_text(&ratings_path)?.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 4 {
            return Err(malformed(&ratings_path, line, format!("expected 4 fields, got {}", f.len())));
        }
        let u: u32 = number(field(&f, 0, &ratings_path, line)?, "user id", &ratings_path, line)?;
        let m: u32 = number(field(&f, 1, &ratings_path, line)?, "movie id", &ratings_path, line)?;
        let r: f64 = number(field(&f, 2, &ratings_path, line)?, "rating", &ratings_path, line)?;
        let _: u64 = number(field(&f, 3, &ratings_path, line)?, "timestamp", &ratings_path, line)?;
        if !users.contains_key(&u) {
            return Err(malformed(&ratings_path, line, format!("unknown user {u}")));
        }
        if !items.contains_key(&m) {
            return Err(malformed(&ratings_path, line, format!("unknown movie {m}")));
        }
        if r >= rating_threshold {
            ratings.push((u, m));
        }
    }

    let mut occupations: Vec<&str> = users.values().map(|(_, o)| o.as_str()).collect();
    occupations.sort_unstable();
    occupations.dedup();

    let mut nodes: Vec<(String, String)> = Vec::new();
    nodes.extend(users.keys().map(|u| (format!("u{u}"), "User".to_string())));
    nodes.extend(items.keys().map(|m| (format!("m{m}"), "Movie".to_string())));
    nodes.extend(AGE_GROUPS.iter().map(|a| (format!("age:{a}"), "Age".to_string())));
    nodes.extend(occupations.iter().map(|o| (format!("occ:{o}"), "Occupation".to_string())));
    nodes.extend(GENRES.iter().map(|g| (format!("genre:{g}"), "Genre".to_string())));

    let mut edges: Vec<(String, String, String)> = Vec::new();
    edges.extend(ratings.iter().map(|(u, m)| (format!("u{u}"), "rate".into(), format!("m{m}"))));
    for (u, (age, occ)) in &users {
        edges.push((format!("u{u}"), "has_age".into(), format!("age:{age}")));
        edges.push((format!("u{u}"), "works_as".into(), format!("occ:{occ}")));
    }
    for (m, genres) in &items {
        for &g in genres {
            edges.push((format!("m{m}"), "belongs_to".into(), format!("genre:{}", GENRES[g])));
        }
    }
    let hin = build_hin(&nodes, &edges, &schema())?;
    Dataset::new(
        "movielens",
        hin,
        "User",
        "Movie",
        "rate",
        default_metapaths(),
        extra_metapaths(),
    )
}

pub fn schema() -> Vec<(String, String, String)> {
    [
        ("User", "rate", "Movie"),
        ("User", "has_age", "Age"),
        ("User", "works_as", "Occupation"),
        ("Movie", "belongs_to", "Genre"),
    ]
    .iter()
    .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
    .collect()
}

pub fn default_metapaths() -> Vec<crate::config::MetaPathDecl> {
    vec![
        decl("UMU", "rate, ~rate"),
        decl("MUM", "~rate, rate"),
        decl("MGM", "belongs_to, ~belongs_to"),
    ]
}

pub fn extra_metapaths() -> Vec<crate::config::MetaPathDecl> {
    vec![
        decl("UMGMU", "rate, belongs_to, ~belongs_to, ~rate"),
        decl("UAU", "has_age, ~has_age"),
        decl("UOU", "works_as, ~works_as"),
        decl("MUAUM", "~rate, has_age, ~has_age, rate"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_mini(dir: &Path, ratings: &str) {
        fs::write(dir.join("u.data"), ratings).unwrap();
        fs::write(
            dir.join("u.user"),
            "1|24|M|technician|85711\n2|53|F|other|94043\n3|17|M|writer|32067\n",
        )
        .unwrap();
        let flags = |on: &[usize]| {
            (0..19)
                .map(|g| if on.contains(&g) { "1" } else { "0" })
                .collect::<Vec<_>>()
                .join("|")
        };
        let items = format!(
            "1|Toy Story (1995)|01-Jan-1995||http://x|{}\n2|GoldenEye (1995)|01-Jan-1995||http://y|{}\n",
            flags(&[3, 4, 5]),
            flags(&[1, 2, 16])
        );
        let mut bytes = items.into_bytes();
        // A Latin-1 byte in a title must not break parsing.
        bytes.splice(8..8, [0xE9u8]);
        fs::write(dir.join("u.item"), bytes).unwrap();
    }

    #[test]
    fn reads_mini_directory() {
        let dir = tempfile::tempdir().unwrap();
        write_mini(dir.path(), "1\t1\t5\t881250949\n2\t1\t3\t881250949\n2\t2\t1\t881250949\n3\t2\t4\t1\n");
        let ds = load_movielens(dir.path(), 0.0).unwrap();
        assert_eq!(ds.num_users(), 3);
        assert_eq!(ds.num_items(), 2);
        assert_eq!(ds.interactions().len(), 4);
        let age = ds.hin.schema().type_id("Age").unwrap();
        assert_eq!(ds.hin.type_count(age), 9);
        assert_eq!(ds.run_metapaths(true).unwrap().len(), 7);

        let strict = load_movielens(dir.path(), 4.0).unwrap();
        assert_eq!(strict.interactions().len(), 2);
    }

    #[test]
    fn truncated_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        write_mini(dir.path(), "1\t1\t5\t881250949\n2\t1\t3\n");
        match load_movielens(dir.path(), 0.0) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_movielens(dir.path(), 0.0), Err(DataError::MissingFile(_))));
    }

    #[test]
    fn age_buckets() {
        assert_eq!(age_group(7), "<18");
        assert_eq!(age_group(18), "18-24");
        assert_eq!(age_group(55), "50-55");
        assert_eq!(age_group(73), "56+");
    }
}
