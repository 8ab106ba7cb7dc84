mod common;

use common::{brute_force_compose, random_metapath, random_typed_graph};
use hemi::graph::{compose_all, compose_metapath};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn composition_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut checked, mut nonempty, mut long) = (0, 0, 0);
    while checked < 200 {
        let g = random_typed_graph(&mut rng);
        let Some(spec) = random_metapath(&g, &mut rng) else { continue };
        let composed = compose_metapath(&g, &spec).unwrap();
        assert!(composed.is_symmetric());
        assert_eq!(composed.to_dense(), brute_force_compose(&g, &spec), "{spec:?}");
        nonempty += usize::from(composed.nnz() > 0);
        long += usize::from(spec.steps.len() >= 3);
        checked += 1;
    }
    assert!(nonempty >= 100 && long >= 50, "{nonempty} non-empty, {long} long");
}

#[test]
fn concurrent_composition_equals_sequential() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = random_typed_graph(&mut rng);
    let specs: Vec<_> = std::iter::repeat_with(|| random_metapath(&g, &mut rng))
        .take(40)
        .flatten()
        .take(4)
        .collect();
    let together = compose_all(&g, &specs).unwrap();
    for (spec, got) in specs.iter().zip(together) {
        assert_eq!(got, compose_metapath(&g, spec).unwrap());
    }
}
