//! Seeded synthetic networks: tiny toys for tests and ~200-node fixtures
//! shaped like the MovieLens, Amazon and Yelp networks.
//!
//! Users and items fall into latent clusters; most interactions stay
//! inside a user's cluster so there is signal to learn.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{decl, Dataset};
use crate::config::MetaPathDecl;
use crate::hin::build_hin;

#[derive(Default)]
struct Builder {
    nodes: Vec<(String, String)>,
    edges: Vec<(String, String, String)>,
}

impl Builder {
    fn nodes(&mut self, prefix: &str, ty: &str, n: usize) {
        self.nodes.extend((0..n).map(|i| (format!("{prefix}{i}"), ty.to_string())));
    }

    fn edge(&mut self, src: String, rel: &str, dst: String) {
        self.edges.push((src, rel.to_string(), dst));
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        name: &str,
        schema: &[(&str, &str, &str)],
        user: &str,
        item: &str,
        rel: &str,
        metapaths: Vec<MetaPathDecl>,
        extra: Vec<MetaPathDecl>,
    ) -> Dataset {
        let hin = build_hin(&self.nodes, &self.edges, &owned(schema)).expect("generator builds a valid network");
        Dataset::new(name, hin, user, item, rel, metapaths, extra).expect("generator declares valid paths")
    }
}

fn owned(schema: &[(&str, &str, &str)]) -> Vec<(String, String, String)> {
    schema
        .iter()
        .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
        .collect()
}

/// Picks `k` distinct items for a user, about 80% from its own cluster.
fn clustered_choice(rng: &mut ChaCha8Rng, items: usize, clusters: usize, cluster: usize, k: usize) -> Vec<usize> {
    let own: Vec<usize> = (0..items).filter(|i| i % clusters == cluster).collect();
    let other: Vec<usize> = (0..items).filter(|i| i % clusters != cluster).collect();
    let from_own = ((k as f64) * 0.8).round() as usize;
    let mut picked: Vec<usize> = own.choose_multiple(rng, from_own.min(own.len())).copied().collect();
    picked.extend(other.choose_multiple(rng, k - picked.len()).copied());
    picked.sort_unstable();
    picked
}

/// Users rate items, items have genres. Every user rates at least two items
/// and every item has at least one genre.
pub fn toy(users: usize, items: usize, genres: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::default();
    b.nodes("u", "User", users);
    b.nodes("i", "Item", items);
    b.nodes("g", "Genre", genres);
    for u in 0..users {
        let k = rng.gen_range(2..=(items / 2).max(2)).min(items);
        let mut pool: Vec<usize> = (0..items).collect();
        pool.shuffle(&mut rng);
        let mut chosen = pool[..k].to_vec();
        chosen.sort_unstable();
        for i in chosen {
            b.edge(format!("u{u}"), "rate", format!("i{i}"));
        }
    }
    for i in 0..items {
        b.edge(format!("i{i}"), "has", format!("g{}", i % genres));
        if rng.gen_bool(0.3) {
            b.edge(format!("i{i}"), "has", format!("g{}", (i + 1) % genres));
        }
    }
    b.finish(
        "toy",
        &[("User", "rate", "Item"), ("Item", "has", "Genre")],
        "User",
        "Item",
        "rate",
        vec![decl("UIU", "rate, ~rate"), decl("IUI", "~rate, rate"), decl("IGI", "has, ~has")],
        vec![decl("UIGIU", "rate, has, ~has, ~rate")],
    )
}

/// Deterministic dense toy: user `u` consumes `per_user` items
/// `(3u + 7j) mod items`, and every item has one of four genres.
pub fn dense_toy(users: usize, items: usize, per_user: usize) -> Dataset {
    let mut b = Builder::default();
    b.nodes("u", "User", users);
    b.nodes("i", "Item", items);
    b.nodes("g", "Genre", 4);
    for u in 0..users {
        let mut chosen: Vec<usize> = (0..per_user).map(|j| (3 * u + 7 * j) % items).collect();
        chosen.sort_unstable();
        chosen.dedup();
        for i in chosen {
            b.edge(format!("u{u}"), "rate", format!("i{i}"));
        }
    }
    for i in 0..items {
        b.edge(format!("i{i}"), "has", format!("g{}", i % 4));
    }
    b.finish(
        "dense-toy",
        &[("User", "rate", "Item"), ("Item", "has", "Genre")],
        "User",
        "Item",
        "rate",
        vec![decl("UIU", "rate, ~rate"), decl("IUI", "~rate, rate"), decl("IGI", "has, ~has")],
        Vec::new(),
    )
}

/// 60 users, 120 movies, 9 age groups, 5 occupations, 6 genres.
pub fn movielens_like(seed: u64) -> Dataset {
    let (users, movies, ages, occs, genres, clusters) = (60, 120, 9, 5, 6, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::default();
    b.nodes("u", "User", users);
    b.nodes("m", "Movie", movies);
    b.nodes("age", "Age", ages);
    b.nodes("occ", "Occupation", occs);
    b.nodes("genre", "Genre", genres);
    for u in 0..users {
        let k = rng.gen_range(8..=16);
        for m in clustered_choice(&mut rng, movies, clusters, u % clusters, k) {
            b.edge(format!("u{u}"), "rate", format!("m{m}"));
        }
        b.edge(format!("u{u}"), "has_age", format!("age{}", rng.gen_range(0..ages)));
        b.edge(format!("u{u}"), "works_as", format!("occ{}", rng.gen_range(0..occs)));
    }
    for m in 0..movies {
        b.edge(format!("m{m}"), "belongs_to", format!("genre{}", m % clusters));
        if rng.gen_bool(0.25) {
            b.edge(format!("m{m}"), "belongs_to", format!("genre{}", rng.gen_range(0..genres)));
        }
    }
    b.finish(
        "movielens-like",
        &[
            ("User", "rate", "Movie"),
            ("User", "has_age", "Age"),
            ("User", "works_as", "Occupation"),
            ("Movie", "belongs_to", "Genre"),
        ],
        "User",
        "Movie",
        "rate",
        super::movielens::default_metapaths(),
        super::movielens::extra_metapaths(),
    )
}

/// 60 users, 110 items, 12 views, 8 categories, 10 brands.
pub fn amazon_like(seed: u64) -> Dataset {
    let (users, items, views, cats, brands, clusters) = (60, 110, 12, 8, 10, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::default();
    b.nodes("u", "User", users);
    b.nodes("i", "Item", items);
    b.nodes("v", "View", views);
    b.nodes("c", "Category", cats);
    b.nodes("b", "Brand", brands);
    for u in 0..users {
        let k = rng.gen_range(5..=10);
        for i in clustered_choice(&mut rng, items, clusters, u % clusters, k) {
            b.edge(format!("u{u}"), "buy", format!("i{i}"));
        }
    }
    for i in 0..items {
        b.edge(format!("i{i}"), "viewed_with", format!("v{}", rng.gen_range(0..views)));
        b.edge(format!("i{i}"), "in_category", format!("c{}", i % cats));
        b.edge(format!("i{i}"), "made_by", format!("b{}", (i % clusters) * 2 + rng.gen_range(0..2)));
    }
    b.finish(
        "amazon-like",
        &[
            ("User", "buy", "Item"),
            ("Item", "viewed_with", "View"),
            ("Item", "in_category", "Category"),
            ("Item", "made_by", "Brand"),
        ],
        "User",
        "Item",
        "buy",
        vec![
            decl("UIU", "buy, ~buy"),
            decl("IUI", "~buy, buy"),
            decl("IBI", "made_by, ~made_by"),
            decl("ICI", "in_category, ~in_category"),
        ],
        vec![
            decl("UIBIU", "buy, made_by, ~made_by, ~buy"),
            decl("UICIU", "buy, in_category, ~in_category, ~buy"),
            decl("IVI", "viewed_with, ~viewed_with"),
        ],
    )
}

/// 70 users, 100 businesses, 10 compliment kinds, 8 cities, 12 categories.
pub fn yelp_like(seed: u64) -> Dataset {
    let (users, biz, compl, cities, cats, clusters) = (70, 100, 10, 8, 12, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::default();
    b.nodes("u", "User", users);
    b.nodes("b", "Business", biz);
    b.nodes("co", "Compliment", compl);
    b.nodes("ci", "City", cities);
    b.nodes("ca", "Category", cats);
    for u in 0..users {
        let k = rng.gen_range(4..=9);
        for x in clustered_choice(&mut rng, biz, clusters, u % clusters, k) {
            b.edge(format!("u{u}"), "review", format!("b{x}"));
        }
        b.edge(format!("u{u}"), "received", format!("co{}", rng.gen_range(0..compl)));
    }
    for x in 0..biz {
        b.edge(format!("b{x}"), "located_in", format!("ci{}", (x % clusters) * 2 + rng.gen_range(0..2)));
        b.edge(format!("b{x}"), "listed_as", format!("ca{}", rng.gen_range(0..cats)));
    }
    b.finish(
        "yelp-like",
        &[
            ("User", "review", "Business"),
            ("User", "received", "Compliment"),
            ("Business", "located_in", "City"),
            ("Business", "listed_as", "Category"),
        ],
        "User",
        "Business",
        "review",
        vec![
            decl("UBU", "review, ~review"),
            decl("BUB", "~review, review"),
            decl("BCiB", "located_in, ~located_in"),
            decl("BCaB", "listed_as, ~listed_as"),
        ],
        vec![
            decl("UCoU", "received, ~received"),
            decl("UBCiBU", "review, located_in, ~located_in, ~review"),
            decl("UBCaBU", "review, listed_as, ~listed_as, ~review"),
        ],
    )
}
