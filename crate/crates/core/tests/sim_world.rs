use treecrawl_core::fetch::sim::{SimParams, SimSource, SimWorld};
use treecrawl_core::reward::{macro_f1, PageText};
use treecrawl_core::{PageSource, RelevanceEstimator, Scenario, ScenarioConfig};

fn params(pages: usize) -> SimParams {
    SimParams {
        pages,
        ..Default::default()
    }
}

#[test]
fn no_locality_gives_the_base_rate_of_relevant_links() {
    let p = SimParams {
        locality: 0.0,
        hub_rate: 0.0,
        ..params(1000)
    };
    let fractions: Vec<f64> = (0..10)
        .map(|seed| {
            let (from_rel, rel_rel) = SimWorld::generate(&p, seed).unwrap().relevant_edge_census();
            rel_rel as f64 / from_rel as f64
        })
        .collect();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!((mean - p.relevant_fraction).abs() < 0.02, "{fractions:?}");
}

#[test]
fn locality_raises_the_share_of_relevant_links() {
    let world = SimWorld::generate(&params(2000), 1).unwrap();
    let (from_rel, rel_rel) = world.relevant_edge_census();
    assert!(rel_rel as f64 / from_rel as f64 > 0.5);
}

#[test]
fn hubs_are_irrelevant_pages_pointing_at_many_relevant_ones() {
    let p = SimParams {
        hub_rate: 0.05,
        ..params(1000)
    };
    let world = SimWorld::generate(&p, 4).unwrap();
    let hubs: Vec<usize> = world
        .pages
        .iter()
        .filter(|pg| !pg.relevant && world.relevant_outlinks(pg.id) >= 5)
        .map(|pg| pg.id)
        .collect();
    assert!(!hubs.is_empty());
    assert!(world.pages.iter().filter(|pg| pg.hub).all(|pg| !pg.relevant));
}

#[test]
fn the_same_seed_regenerates_the_same_links() {
    let p = params(800);
    let a = SimWorld::generate(&p, 9).unwrap();
    let b = SimWorld::generate(&p, 9).unwrap();
    assert_eq!(a.hash(), b.hash());
    for (x, y) in a.pages.iter().zip(&b.pages) {
        assert_eq!(x.outlinks, y.outlinks);
    }
    let c = SimWorld::generate(&p, 10).unwrap();
    assert_ne!(a.hash(), c.hash());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("world.jsonl");
    a.save(&path).unwrap();
    assert_eq!(SimWorld::load(&path).unwrap(), a);
}

#[test]
fn served_pages_mirror_the_world() {
    let world = SimWorld::generate(&params(300), 2).unwrap();
    let mut source = SimSource::new(&world);
    for pg in world.pages.iter().take(50) {
        let page = source.fetch(&pg.url).unwrap();
        let targets: Vec<&str> = pg.outlinks.iter().map(|l| world.pages[l.target].url.as_str()).collect();
        let served: Vec<&str> = page.outlinks.iter().map(|o| o.url.as_str()).collect();
        assert_eq!(served, targets);
        assert_eq!(world.is_relevant(&page.url), Some(pg.relevant));
    }
    assert!(source.fetch("http://nowhere.test/").is_err());
}

#[test]
fn trained_reward_tracks_the_labels() {
    let cfg = ScenarioConfig {
        params: params(3000),
        training_pages: 4000,
        corpus_relevant: 200,
        corpus_irrelevant: 1800,
        ..Default::default()
    };
    let sc = Scenario::build(cfg).unwrap();
    assert!(sc.holdout_macro_f1 >= 0.9, "holdout F1 {}", sc.holdout_macro_f1);

    let relevant = sc.corpus.iter().filter(|p| p.label == 1).count();
    assert_eq!((relevant, sc.corpus.len() - relevant), (200, 1800));
    let scores: Vec<(f64, u8)> = sc
        .corpus
        .iter()
        .map(|p| (sc.model.relevance_probability(&p.page_text(sc.model.max_len()), sc.keywords()), p.label))
        .collect();
    let f1 = macro_f1(&scores, sc.model.threshold());
    assert!(f1 >= 0.9, "corpus F1 {f1}");

    let agree = sc
        .world
        .pages
        .iter()
        .filter(|pg| {
            let page = sc.world.page(&pg.url).unwrap();
            let text = PageText::from_page(&page.url, &page.title, &page.body_text, sc.model.max_len());
            (sc.model.reward(&text, sc.keywords()) == 1) == pg.relevant
        })
        .count();
    let rate = agree as f64 / sc.world.len() as f64;
    assert!(rate >= 0.95, "agreement {rate}");
}
