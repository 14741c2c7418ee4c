use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meshannot_core::energy::{solve_binary_labeling, BinaryLabelingProblem};
use meshannot_core::face::{extract_protrusions, ProtrusionProblem};
use meshannot_core::fixture::{Fixture, FixtureSpec};
use meshannot_core::geometry::ShrinkingBall;
use meshannot_core::sampling::{sample_points, SamplingStrategy};
use meshannot_core::segmentation::oversegment;
use meshannot_core::texture::{build_canvas, compute_superpixels, local_expand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid_problem(side: usize, seed: u64) -> BinaryLabelingProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    let costs = (0..n).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let mut edges = Vec::new();
    for y in 0..side {
        for x in 0..side {
            let i = y * side + x;
            if x + 1 < side {
                edges.push((i, i + 1, rng.random_range(0.0..1.0)));
            }
            if y + 1 < side {
                edges.push((i, i + side, rng.random_range(0.0..1.0)));
            }
        }
    }
    BinaryLabelingProblem::new(costs, edges, 0.5)
}

fn solver(c: &mut Criterion) {
    let mut g = c.benchmark_group("min_cut");
    for side in [32, 128] {
        let p = grid_problem(side, 1);
        g.bench_with_input(BenchmarkId::from_parameter(side * side), &p, |b, p| b.iter(|| solve_binary_labeling(p).unwrap()));
    }
    g.finish();
}

fn texture(c: &mut Criterion) {
    let f = Fixture::generate(&FixtureSpec::facade_windows()).unwrap();
    let seg = oversegment(&f.mesh, &Default::default()).unwrap();
    let wall = seg.segment_of(f.truth.boxes[0].wall_faces[0][0]);
    let canvas = build_canvas(&f.mesh, &seg.segments[wall]).unwrap();
    c.bench_function("slic_facade_wall", |b| b.iter(|| compute_superpixels(&canvas, &Default::default()).unwrap()));

    let sp = compute_superpixels(&canvas, &Default::default()).unwrap();
    let w = &f.truth.windows[0];
    let mid = w.texels[w.texels.len() / 2];
    let click = canvas.from_page(w.page, mid.0, mid.1).unwrap();
    c.bench_function("local_expand_window", |b| b.iter(|| local_expand(&canvas, &sp, click, &Default::default()).unwrap()));
}

fn protrusion(c: &mut Criterion) {
    let f = Fixture::generate(&FixtureSpec::cube_on_plane()).unwrap();
    let seg = oversegment(&f.mesh, &Default::default()).unwrap();
    c.bench_function("shrinking_ball_cube", |b| b.iter(|| ShrinkingBall::compute(&f.mesh).unwrap()));
    let radii = ShrinkingBall::compute(&f.mesh).unwrap().radii;
    let mut cand: Vec<usize> = f.truth.ground_faces[0].clone();
    cand.extend(&f.truth.boxes[0].visible_faces);
    c.bench_function("extract_protrusions_cube", |b| {
        b.iter(|| {
            let p = ProtrusionProblem::build(&f.mesh, &seg, &cand, &radii, Default::default()).unwrap();
            extract_protrusions(&p).unwrap()
        })
    });
}

fn sampling(c: &mut Criterion) {
    let f = Fixture::generate(&FixtureSpec::box_village()).unwrap();
    let faces = f.mesh.face_count();
    let mut g = c.benchmark_group("sampling");
    g.sample_size(10);
    for (name, s) in [
        ("face_centered", SamplingStrategy::FaceCentered),
        ("random", SamplingStrategy::Random { count: 4 * faces }),
        ("poisson", SamplingStrategy::Poisson { radius: 0.25 }),
        ("superpixel", SamplingStrategy::Superpixel { region_size: 4 }),
    ] {
        g.bench_function(name, |b| b.iter(|| sample_points(&f.mesh, &s, 1).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, solver, texture, protrusion, sampling);
criterion_main!(benches);
