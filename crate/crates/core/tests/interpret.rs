use maplur_core::autodiff::{Conv2d, ConvGeometry, Flatten, Layer, Linear, Mode, Relu, Sequential, Tensor};
use maplur_core::error::{Error, Result};
use maplur_core::interpret::{
    area_probe, default_road_width, distance_probe, entity_probe, guided_gradient, guided_saliency, model_fingerprint,
    pearson, spearman, SaliencyMap, TileEstimator, PROBE_ENTITIES,
};
use maplur_core::model::{MapLurSpec, TrainedModel};
use maplur_core::rng::seeded;
use maplur_core::scene::{
    artificial_tile, Axis, Entity, LandUseClass, Palette, ProbeSpec, RoadClass, RoadOverlay, TileImage,
};
use proptest::prelude::*;
use rand::Rng;

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(shape, data).unwrap()
}

/// conv(1→1, 3×3, same) → ReLU → sum over the 3×3 output.
fn conv_relu_sum(w: [f64; 9], b: f64) -> Sequential<f64> {
    let mut conv = Conv2d::new(1, 1, ConvGeometry::SAME3);
    conv.weight.data_mut().copy_from_slice(&w);
    conv.bias.data_mut()[0] = b;
    let mut sum = Linear::new(9, 1);
    sum.weight.data_mut().fill(1.0);
    Sequential::new(vec![Layer::Conv2d(conv), Layer::Relu(Relu::new()), Layer::Flatten(Flatten::new()), Layer::Linear(sum)])
}

#[test]
fn conv_relu_sum_matches_hand_gradient() {
    let w = [0.5, -1.0, 0.25, 2.0, 1.0, -0.5, -0.75, 0.5, 1.5];
    let b = -0.3;
    let x = [1.0, -2.0, 0.5, 0.0, 3.0, -1.0, 2.0, 1.0, -0.5];
    let net = conv_relu_sum(w, b);
    let g = guided_gradient(&net, tensor(&[1, 1, 3, 3], x.to_vec())).unwrap();

    // y_ij = b + Σ w_ab x_{i+a−1, j+b−1}; d(Σ relu y)/dx_pq = Σ_{y_ij > 0} w_{p−i+1, q−j+1}.
    let at = |i: i64, j: i64| if (0..3).contains(&i) && (0..3).contains(&j) { x[(i * 3 + j) as usize] } else { 0.0 };
    let mut open = [[false; 3]; 3];
    for i in 0..3i64 {
        for j in 0..3i64 {
            let mut y = b;
            for a in 0..3i64 {
                for c in 0..3i64 {
                    y += w[(a * 3 + c) as usize] * at(i + a - 1, j + c - 1);
                }
            }
            open[i as usize][j as usize] = y > 0.0;
        }
    }
    assert!(open.iter().flatten().any(|o| *o) && open.iter().flatten().any(|o| !*o));
    for p in 0..3i64 {
        for q in 0..3i64 {
            let mut expected = 0.0;
            for i in 0..3i64 {
                for j in 0..3i64 {
                    let (a, c) = (p - i + 1, q - j + 1);
                    if open[i as usize][j as usize] && (0..3).contains(&a) && (0..3).contains(&c) {
                        expected += w[(a * 3 + c) as usize];
                    }
                }
            }
            assert!((g.data()[(p * 3 + q) as usize] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn closed_gates_give_a_degenerate_map() {
    let mut l1 = Linear::new(4, 3);
    l1.weight.data_mut().copy_from_slice(&[-1.0; 12]);
    l1.bias.data_mut().fill(-0.5);
    let mut l2 = Linear::new(3, 1);
    l2.weight.data_mut().fill(1.0);
    let net: Sequential<f64> = Sequential::new(vec![
        Layer::Flatten(Flatten::new()),
        Layer::Linear(l1),
        Layer::Relu(Relu::new()),
        Layer::Linear(l2),
    ]);
    let x = tensor(&[1, 1, 2, 2], vec![0.1, 0.4, 0.2, 0.9]);
    let g = guided_gradient(&net, x).unwrap();
    assert!(g.data().iter().all(|v| *v == 0.0));
    let map = SaliencyMap::from_gradient(g.data(), g.shape()).unwrap();
    assert!(map.degenerate);
    assert!(map.values.iter().all(|v| *v == 0.0));
}

#[test]
fn uniform_input_gives_uniform_interior_saliency() {
    let mut rng = seeded(4);
    let mut c1 = Conv2d::new(3, 4, ConvGeometry::SAME3);
    c1.init(&mut rng);
    c1.bias.data_mut().fill(0.3);
    let mut c2 = Conv2d::new(4, 1, ConvGeometry::SAME3);
    c2.init(&mut rng);
    c2.bias.data_mut().fill(0.3);
    let px = 12;
    let mut sum = Linear::new(px * px, 1);
    sum.weight.data_mut().fill(1.0);
    let net: Sequential<f64> = Sequential::new(vec![
        Layer::Conv2d(c1),
        Layer::Relu(Relu::new()),
        Layer::Conv2d(c2),
        Layer::Relu(Relu::new()),
        Layer::Flatten(Flatten::new()),
        Layer::Linear(sum),
    ]);
    let x = tensor(&[1, 3, px, px], vec![0.6; 3 * px * px]);
    let g = guided_gradient(&net, x).unwrap();
    let map = SaliencyMap::from_gradient(g.data(), g.shape()).unwrap();
    // Receptive field radius 2, so the gradient feels the border within 4 px.
    let reference = map.get(6, 6);
    for y in 4..px - 4 {
        for x in 4..px - 4 {
            assert!((map.get(y, x) - reference).abs() < 1e-12);
        }
    }
}

fn desk_model(seed: u64) -> TrainedModel {
    let spec = MapLurSpec::desk(3).unwrap();
    let mut net = spec.network(seed).unwrap();
    let palette = Palette::default();
    let tiles: Vec<TileImage> = PROBE_ENTITIES
        .iter()
        .map(|e| artificial_tile(&ProbeSpec::uniform(*e, spec.input_px), &palette).unwrap())
        .collect();
    let mut data = Vec::new();
    tiles.iter().for_each(|t| data.extend_from_slice(t.data()));
    let x = Tensor::from_vec(&[tiles.len(), 3, spec.input_px, spec.input_px], data).unwrap();
    net.forward(x, Mode::Train).unwrap();
    net.clear_caches();
    TrainedModel::from_network(spec, net)
}

fn running_stats(model: &TrainedModel) -> Vec<f32> {
    model
        .net
        .layers()
        .iter()
        .filter_map(|l| match l {
            Layer::BatchNorm2d(b) => Some(b.running_mean.iter().chain(&b.running_var).copied().collect::<Vec<_>>()),
            _ => None,
        })
        .flatten()
        .collect()
}

#[test]
fn saliency_leaves_the_model_untouched() {
    let model = desk_model(1);
    let (fp, stats) = (model_fingerprint(&model), running_stats(&model));
    let palette = Palette::default();
    let road = RoadOverlay { class: RoadClass::Trunk, width_px: 6, axis: Axis::Vertical, offset_px: 0 };
    let tile = artificial_tile(&ProbeSpec::with_road(Entity::LandUse(LandUseClass::Neutral), road, 64), &palette).unwrap();
    let before = maplur_core::model::predict(&model, &tile).unwrap();
    let map = guided_saliency(&model, &tile, "trunk").unwrap();
    assert_eq!((map.height, map.width), (64, 64));
    assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
    assert_eq!(map.input_id, "trunk");
    assert_eq!(model_fingerprint(&model), fp);
    assert_eq!(running_stats(&model), stats);
    assert!(!model.net.guided_mode());
    assert_eq!(maplur_core::model::predict(&model, &tile).unwrap(), before);
    assert_eq!(guided_saliency(&model, &tile, "trunk").unwrap(), map);

    let fresh = TrainedModel::from_network(model.spec.clone(), model.spec.network(1).unwrap());
    assert_eq!(guided_saliency(&fresh, &tile, "x").unwrap_err(), Error::UninitializedStats);
    assert!(matches!(guided_saliency(&model, &TileImage::filled(32, 32, [0.0; 3]), "x"), Err(Error::Shape(_))));
}

/// Oracle-flavoured stand-in: estimate grows with trunk/motorway-coloured
/// pixels, weighted towards the tile center.
struct RoadCounter {
    px: usize,
    palette: Palette,
}

impl TileEstimator for RoadCounter {
    fn input_px(&self) -> usize {
        self.px
    }

    fn estimate(&self, tiles: &[TileImage]) -> Result<Vec<f64>> {
        let targets = [self.palette.road(RoadClass::Trunk), self.palette.road(RoadClass::Motorway)];
        Ok(tiles
            .iter()
            .map(|t| {
                let c = (self.px as f64 - 1.0) / 2.0;
                let mut s = 20.0;
                for y in 0..self.px {
                    for x in 0..self.px {
                        let p = t.pixel(y, x);
                        if targets.iter().any(|rgb| rgb.iter().zip(&p).all(|(a, b)| a == b)) {
                            let d = ((y as f64 - c).powi(2) + (x as f64 - c).powi(2)).sqrt();
                            s += (-d / 10.0).exp();
                        }
                    }
                }
                s
            })
            .collect())
    }
}

#[test]
fn entity_table_shape() {
    let est = RoadCounter { px: 32, palette: Palette::default() };
    let t = entity_probe(&est, &est.palette, default_road_width(32)).unwrap();
    assert_eq!(t.populated(), 9 + 7 + 7);
    assert_eq!(t.cells.iter().map(|r| r.iter().flatten().count()).collect::<Vec<_>>(), vec![9, 7, 7]);
    for overlay in [Some(RoadClass::Trunk), Some(RoadClass::Motorway)] {
        assert_eq!(t.get(overlay, Entity::Road(RoadClass::Trunk)), None);
        assert_eq!(t.get(overlay, Entity::Road(RoadClass::Motorway)), None);
        for e in &PROBE_ENTITIES[..7] {
            assert!(t.get(overlay, *e).unwrap() > t.get(None, *e).unwrap());
        }
    }
    assert!(t.get(None, Entity::Road(RoadClass::Trunk)).unwrap() > t.get(None, Entity::LandUse(LandUseClass::Neutral)).unwrap());
}

#[test]
fn probes_are_pure_functions_of_the_model() {
    let model = desk_model(2);
    let palette = Palette::default();
    let a = entity_probe(&model, &palette, 4).unwrap();
    let b = entity_probe(&model, &palette, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.populated(), 23);
    let widths = [0, 2, 4, 8, 16];
    assert_eq!(area_probe(&model, &palette, &widths).unwrap(), area_probe(&model, &palette, &widths).unwrap());
}

#[test]
fn probe_curve_anchors() {
    let model = desk_model(3);
    let palette = Palette::default();
    let neutral = artificial_tile(&ProbeSpec::uniform(Entity::LandUse(LandUseClass::Neutral), 64), &palette).unwrap();
    let plain = model.estimate(&[neutral]).unwrap()[0];

    let area = area_probe(&model, &palette, &[0, 4, 8, 12]).unwrap();
    for axis in [Axis::Horizontal, Axis::Vertical] {
        assert_eq!(area.get(axis).estimates[0], plain);
        assert_eq!(area.get(axis).abscissa, vec![0.0, 4.0, 8.0, 12.0]);
    }
    let dist = distance_probe(&model, &palette, 8, &[0, 10, 20, 40, 100]).unwrap();
    for axis in [Axis::Horizontal, Axis::Vertical] {
        let c = dist.get(axis);
        assert_eq!(c.estimates[0], area.get(axis).estimates[2]);
        // 100 px pushes an 8 px road entirely off a 64 px tile.
        assert_eq!(c.estimates[4], plain);
    }
    assert!(area_probe(&model, &palette, &[4, 4]).is_err());
    assert!(area_probe(&model, &palette, &[65]).is_err());
    assert!(distance_probe(&model, &palette, 0, &[0]).is_err());
}

#[test]
fn probe_curves_on_a_center_weighted_estimator() {
    let est = RoadCounter { px: 48, palette: Palette::default() };
    let area = area_probe(&est, &est.palette, &[0, 2, 4, 8, 16, 24]).unwrap();
    let dist = distance_probe(&est, &est.palette, 4, &[0, 4, 8, 12, 16, 20]).unwrap();
    for axis in [Axis::Horizontal, Axis::Vertical] {
        assert!(area.get(axis).spearman.unwrap() >= 0.999);
        assert!(dist.get(axis).pearson.unwrap() < -0.6);
    }
    // Symmetric estimator: both road directions agree.
    for (h, v) in area.horizontal.estimates.iter().zip(&area.vertical.estimates) {
        assert!((h - v).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn correlations_are_bounded_and_rank_invariant(xs in prop::collection::vec(-100.0f64..100.0, 3..30), seed in 0u64..1000) {
        let mut rng = seeded(seed);
        let ys: Vec<f64> = xs.iter().map(|x| x * 0.3 + rng.random_range(-20.0..20.0)).collect();
        if let Ok(r) = pearson(&xs, &ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
            let s = spearman(&xs, &ys).unwrap();
            // A strictly increasing transform of ys leaves ranks unchanged.
            let cubed: Vec<f64> = ys.iter().map(|v| v * v * v + v).collect();
            prop_assert!((spearman(&xs, &cubed).unwrap() - s).abs() < 1e-12);
        }
    }
}
