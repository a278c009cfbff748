use std::f64::consts::FRAC_PI_2;

use half::f16;
use rayon::prelude::*;

use crate::blend::quantize_unorm8;
use crate::error::InputError;
use crate::math::Vec3;
use crate::model::{AvatarAsset, LayeredMesh, MeshLayer, TextureAtlas, WarpAtlas, MAX_WARP_OFFSET, SH_TEXEL_LEN};
use crate::sample::texel_center;

use super::intersect::{intersect_layers, Ray};
use super::scene::AnalyticScene;
use super::{BakeConfig, BakeError};

/// `(azimuth, elevation) / (pi / 2)` of `point - center`, azimuth measured
/// from `+z` toward `+x`, elevation toward `+y`; clamped to `[-1, 1]`.
pub fn spherical_uv(point: Vec3, center: Vec3) -> Result<[f64; 2], InputError> {
    let d = point - center;
    if d.length() == 0.0 {
        return Err(InputError::invalid("spherical uv", "point coincides with the scene center"));
    }
    let az = d.x.atan2(d.z);
    let el = d.y.atan2(d.x.hypot(d.z));
    Ok([(az / FRAC_PI_2).clamp(-1.0, 1.0), (el / FRAC_PI_2).clamp(-1.0, 1.0)])
}

/// Unit direction for lattice coordinates in `[-1, 1]^2`; the inverse of
/// [`spherical_uv`] on the front hemisphere.
pub fn hemisphere_direction(uv: [f64; 2]) -> Vec3 {
    let (az, el) = (uv[0] * FRAC_PI_2, uv[1] * FRAC_PI_2);
    Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
}

/// Raw double-precision intersections of the bake lattice, before the
/// mesh rounds them to 32-bit.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub res: usize,
    /// `hits[layer][row * res + col]`.
    pub hits: Vec<Vec<Option<Vec3>>>,
}

impl Lattice {
    pub fn uv(&self, vertex: usize) -> [f64; 2] {
        [texel_center(vertex % self.res, self.res), texel_center(vertex / self.res, self.res)]
    }

    /// Vertices hit in every layer.
    pub fn valid(&self) -> Vec<bool> {
        (0..self.res * self.res).map(|v| self.hits.iter().all(|l| l[v].is_some())).collect()
    }
}

/// Casts one ray per lattice cell from the front hemisphere toward the
/// scene center and records every layer's first crossing.
pub fn bake_lattice(scene: &AnalyticScene, grid_res: usize) -> Result<Lattice, BakeError> {
    if grid_res < 2 {
        return Err(BakeError::Config(format!("grid_res must be at least 2, got {grid_res}")));
    }
    let reach = scene.bound_radius() * 1.5;
    let layers = scene.layers();
    let per_cell: Vec<Vec<Option<Vec3>>> = (0..grid_res * grid_res)
        .into_par_iter()
        .map(|v| {
            let uv = [texel_center(v % grid_res, grid_res), texel_center(v / grid_res, grid_res)];
            let dir = hemisphere_direction(uv);
            let ray = Ray::new(scene.center() + dir * reach, -dir);
            intersect_layers(scene, &ray).into_iter().map(|h| h.map(|h| h.point)).collect()
        })
        .collect();
    let hits = (0..layers).map(|i| per_cell.iter().map(|c| c[i]).collect()).collect();
    let lattice = Lattice { res: grid_res, hits };
    check_coverage(&lattice)?;
    Ok(lattice)
}

/// Rejects lattices where more than half the cells miss some layer.
pub(crate) fn check_coverage(lattice: &Lattice) -> Result<(), BakeError> {
    let total = lattice.res * lattice.res;
    let missed = lattice.valid().iter().filter(|v| !**v).count();
    if missed * 2 > total {
        return Err(BakeError::Degenerate { missed, total });
    }
    Ok(())
}

/// Two counterclockwise triangles per lattice quad whose four corners are
/// valid. Columns grow with azimuth (screen right for a frontal viewer),
/// rows with elevation (screen up).
pub(crate) fn triangulate(rows: usize, cols: usize, valid: &[bool]) -> Vec<[u32; 3]> {
    let mut out = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let i00 = r * cols + c;
            let (i10, i01, i11) = (i00 + 1, i00 + cols, i00 + cols + 1);
            if [i00, i10, i01, i11].iter().all(|&i| valid[i]) {
                out.push([i00 as u32, i10 as u32, i11 as u32]);
                out.push([i00 as u32, i11 as u32, i01 as u32]);
            }
        }
    }
    out
}

/// Lattice to layered mesh. Missed cells keep a placeholder vertex at the
/// scene center that no triangle references.
pub fn lattice_to_mesh(lattice: &Lattice, center: Vec3) -> Result<LayeredMesh, InputError> {
    let res = lattice.res;
    let valid = lattice.valid();
    let indices = triangulate(res, res, &valid);
    let canonical_uv: Vec<[f32; 2]> = (0..res * res)
        .map(|v| {
            let uv = lattice.uv(v);
            [uv[0] as f32, uv[1] as f32]
        })
        .collect();
    let layers = lattice
        .hits
        .iter()
        .map(|hits| MeshLayer {
            positions: hits.iter().map(|h| h.unwrap_or(center).to_f32()).collect(),
            canonical_uv: canonical_uv.clone(),
            indices: indices.clone(),
        })
        .collect();
    LayeredMesh::new(res as u32, res as u32, layers)
}

pub fn bake_mesh(scene: &AnalyticScene, config: &BakeConfig) -> Result<LayeredMesh, BakeError> {
    config.validate()?;
    let lattice = bake_lattice(scene, config.grid_res)?;
    Ok(lattice_to_mesh(&lattice, scene.center())?)
}

fn texel_uv(t: usize, res: usize) -> [f64; 2] {
    [texel_center(t % res, res), texel_center(t / res, res)]
}

/// Evaluates every warp and texture generator at the texel centers.
pub fn bake_maps(scene: &AnalyticScene, config: &BakeConfig) -> Result<(WarpAtlas, TextureAtlas), BakeError> {
    config.validate()?;
    let (n, w, t) = (scene.layers(), scene.warp_basis(), scene.tex_basis());

    let wres = config.warp_res;
    let warp_maps: Vec<Vec<f32>> = (0..n * w)
        .into_par_iter()
        .map(|m| {
            let (layer, basis) = (m / w, m % w);
            let gen = scene.warp_gen(layer, basis);
            let mut out = Vec::with_capacity(wres * wres * 2);
            for texel in 0..wres * wres {
                let d = gen.eval(texel_uv(texel, wres));
                for v in d {
                    if !v.is_finite() || v.abs() > MAX_WARP_OFFSET as f64 {
                        return Err(BakeError::BadSample { map: "warp", layer, basis, texel, value: v });
                    }
                    out.push(v as f32);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let tres = config.tex_res;
    let specular = config.include_specular;
    let tex_maps: Vec<(Vec<u8>, Vec<f16>)> = (0..n * t)
        .into_par_iter()
        .map(|m| {
            let (layer, basis) = (m / t, m % t);
            let gen = scene.tex_gen(layer, basis);
            let mut rgba = Vec::with_capacity(tres * tres * 4);
            let mut sh = Vec::with_capacity(if specular { tres * tres * SH_TEXEL_LEN } else { 0 });
            let mut coeffs = [0.0; SH_TEXEL_LEN];
            for texel in 0..tres * tres {
                let uv = texel_uv(texel, tres);
                let rgb = gen.color.eval(uv);
                let alpha = gen.alpha.eval(uv);
                for v in rgb.into_iter().chain([alpha]) {
                    if !v.is_finite() {
                        return Err(BakeError::BadSample { map: "texture", layer, basis, texel, value: v });
                    }
                    rgba.push(quantize_unorm8(v));
                }
                if specular {
                    gen.specular.eval(uv, &mut coeffs);
                    for &v in &coeffs {
                        if !v.is_finite() {
                            return Err(BakeError::BadSample { map: "specular", layer, basis, texel, value: v });
                        }
                        sh.push(f16::from_f64(v));
                    }
                }
            }
            Ok((rgba, sh))
        })
        .collect::<Result<_, _>>()?;

    let warps = WarpAtlas::new(n, w, wres, warp_maps.concat())?;
    let (rgba, sh): (Vec<Vec<u8>>, Vec<Vec<f16>>) = tex_maps.into_iter().unzip();
    let textures = TextureAtlas::new(n, t, tres, rgba.concat(), specular.then(|| sh.concat()))?;
    Ok((warps, textures))
}

/// Mesh, maps and the scene's mapper bundled as an asset.
pub fn bake_asset(scene: &AnalyticScene, config: &BakeConfig) -> Result<AvatarAsset, BakeError> {
    let mesh = bake_mesh(scene, config)?;
    let (warps, textures) = bake_maps(scene, config)?;
    Ok(AvatarAsset::new(mesh, warps, textures, scene.mapper().clone(), scene.center().to_f32())?)
}

/// Lattice indices kept when reducing `from` samples per axis to `to`:
/// evenly spaced and always including both ends.
pub fn decimation_indices(from: usize, to: usize) -> Vec<usize> {
    if to == 1 {
        return vec![0];
    }
    (0..to).map(|b| ((b * (from - 1)) as f64 / (to - 1) as f64).round() as usize).collect()
}

/// Grid-stride decimation of a lattice mesh to `target` samples per axis.
pub fn decimate(mesh: &LayeredMesh, target: usize) -> Result<LayeredMesh, InputError> {
    let (rows, cols) = mesh.grid();
    let (rows, cols) = (rows as usize, cols as usize);
    if rows != cols {
        return Err(InputError::invalid("decimate", "lattice must be square"));
    }
    if target < 2 || target > rows || rows % target != 0 {
        return Err(InputError::invalid("decimate", format!("target {target} does not divide grid resolution {rows}")));
    }
    if mesh.layers().iter().any(|l| l.vertex_count() != rows * cols) {
        return Err(InputError::invalid("decimate", "mesh is not a full lattice"));
    }
    if target == rows {
        return Ok(mesh.clone());
    }
    let keep = decimation_indices(rows, target);
    let kept: Vec<usize> = keep.iter().flat_map(|&r| keep.iter().map(move |&c| r * cols + c)).collect();
    let referenced: Vec<Vec<bool>> = mesh.layers().iter().map(MeshLayer::referenced).collect();
    let valid: Vec<bool> = kept.iter().map(|&v| referenced.iter().all(|r| r[v])).collect();
    let indices = triangulate(target, target, &valid);
    let layers = mesh
        .layers()
        .iter()
        .map(|l| MeshLayer {
            positions: kept.iter().map(|&v| l.positions[v]).collect(),
            canonical_uv: kept.iter().map(|&v| l.canonical_uv[v]).collect(),
            indices: indices.clone(),
        })
        .collect();
    LayeredMesh::new(target as u32, target as u32, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baker::scene::{parse_scene, preset, ColorPattern, TexGen, WarpGen};
    use crate::model::BlendMapper;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spheres() -> AnalyticScene {
        parse_scene("preset = spheres\nradii = 1, 2\n").unwrap()
    }

    fn cfg(grid: usize, tex: usize) -> BakeConfig {
        BakeConfig { grid_res: grid, tex_res: tex, warp_res: tex, include_specular: false }
    }

    #[test]
    fn forward_axis_maps_to_origin() {
        assert_eq!(spherical_uv(Vec3::new(0.0, 0.0, 5.0), Vec3::ZERO).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn quarter_azimuth_maps_to_half() {
        let p = Vec3::new((FRAC_PI_2 / 2.0).sin(), 0.0, (FRAC_PI_2 / 2.0).cos());
        let uv = spherical_uv(p, Vec3::ZERO).unwrap();
        assert!((uv[0] - 0.5).abs() < 1e-12 && uv[1].abs() < 1e-12);
    }

    #[test]
    fn center_is_rejected() {
        assert!(spherical_uv(Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 3.0)).is_err());
    }

    // Forward-trig oracle: build d from angles, read the angles back.
    #[test]
    fn spherical_uv_inverts_forward_trig() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = Vec3::new(0.3, -0.2, 0.1);
        for _ in 0..200 {
            let az: f64 = rng.gen_range(-FRAC_PI_2..FRAC_PI_2);
            let el: f64 = rng.gen_range(-1.5..1.5);
            let d = Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
            let uv = spherical_uv(c + d * 2.0, c).unwrap();
            assert!((uv[0] - az * 2.0 / std::f64::consts::PI).abs() < 1e-9);
            assert!((uv[1] - el * 2.0 / std::f64::consts::PI).abs() < 1e-9);
        }
    }

    #[test]
    fn two_by_two_spheres() {
        let scene = spheres();
        let mesh = bake_mesh(&scene, &cfg(2, 2)).unwrap();
        assert_eq!(mesh.num_layers(), 2);
        for (layer, radius) in mesh.layers().iter().zip([2.0, 1.0]) {
            assert_eq!(layer.vertex_count(), 4);
            assert_eq!(layer.indices.len(), 2);
            for p in &layer.positions {
                assert!((Vec3::from_f32(*p).length() - radius).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn canonical_uv_matches_lattice_and_spherical_map() {
        let scene = preset("ellipsoid").unwrap();
        let lattice = bake_lattice(&scene, 17).unwrap();
        let mesh = lattice_to_mesh(&lattice, scene.center()).unwrap();
        for layer in mesh.layers() {
            for (v, uv) in layer.canonical_uv.iter().enumerate() {
                let expect = lattice.uv(v);
                assert!((uv[0] as f64 - expect[0]).abs() < 1e-6 && (uv[1] as f64 - expect[1]).abs() < 1e-6);
                // Away from the poles the spherical map inverts the casting parameterization.
                if expect[1].abs() < 1.0 {
                    let back = spherical_uv(Vec3::from_f32(layer.positions[v]), scene.center()).unwrap();
                    assert!((back[0] - expect[0]).abs() < 1e-5 && (back[1] - expect[1]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn ellipsoid_lattice_hits_lie_on_levels() {
        let scene = preset("ellipsoid").unwrap();
        let lattice = bake_lattice(&scene, 64).unwrap();
        for (layer, hits) in lattice.hits.iter().enumerate() {
            for h in hits {
                let h = h.expect("ellipsoid covers the hemisphere");
                assert!((scene.field_at(h) - scene.levels()[layer]).abs() <= 1e-8);
            }
        }
        let mesh = lattice_to_mesh(&lattice, scene.center()).unwrap();
        assert!(mesh.is_nested(scene.center()));
    }

    // Rays aimed at the center always cross every valid shell, so the
    // coverage rule is exercised on a hand-built lattice.
    #[test]
    fn mostly_missed_lattice_is_degenerate() {
        let hit = Some(Vec3::Z);
        let lattice = |hits: Vec<Option<Vec3>>| Lattice { res: 2, hits: vec![vec![hit; 4], hits] };
        assert!(check_coverage(&lattice(vec![hit, hit, None, None])).is_ok());
        assert!(matches!(
            check_coverage(&lattice(vec![hit, None, None, None])),
            Err(BakeError::Degenerate { missed: 3, total: 4 })
        ));
    }

    #[test]
    fn zero_warp_bakes_to_zero_atlas() {
        let (warps, _) = bake_maps(&spheres(), &cfg(2, 4)).unwrap();
        assert!(warps.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_texels() {
        let mapper = BlendMapper::constant(1, &[0.0], &[1.0]).unwrap();
        let gen = TexGen {
            color: ColorPattern::Checker { cells: 2, a: [0.0; 3], b: [1.0; 3] },
            ..TexGen::constant([0.0; 3], 1.0)
        };
        let scene = AnalyticScene::new(
            Vec3::ZERO,
            crate::baker::scene::ShellField::sphere(),
            vec![0.0],
            vec![WarpGen::Zero],
            vec![gen],
            mapper,
        )
        .unwrap();
        let (_, tex) = bake_maps(&scene, &cfg(2, 4)).unwrap();
        // Texel centers -1, -1/3, 1/3, 1 fall in cells 0, 0, 1, 1.
        let expected: [[u8; 4]; 4] = [[0, 0, 255, 255], [0, 0, 255, 255], [255, 255, 0, 0], [255, 255, 0, 0]];
        let map = tex.rgba_map(0, 0);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(map[(r * 4 + c) * 4], expected[r][c], "texel ({r}, {c})");
                assert_eq!(map[(r * 4 + c) * 4 + 3], 255);
            }
        }
    }

    // Direct evaluation oracle at texel centers.
    #[test]
    fn texels_match_direct_generator_evaluation() {
        let scene = preset("ellipsoid").unwrap();
        let config = BakeConfig { grid_res: 2, tex_res: 16, warp_res: 8, include_specular: true };
        let (warps, tex) = bake_maps(&scene, &config).unwrap();
        for (layer, basis) in [(0, 0), (5, 7), (11, 11)] {
            let wg = scene.warp_gen(layer, basis);
            for t in 0..64 {
                let d = wg.eval([texel_center(t % 8, 8), texel_center(t / 8, 8)]);
                assert_eq!(warps.map(layer, basis)[2 * t], d[0] as f32);
            }
            let tg = scene.tex_gen(layer, basis);
            let mut sh = [0.0; SH_TEXEL_LEN];
            for t in 0..256 {
                let uv = [texel_center(t % 16, 16), texel_center(t / 16, 16)];
                let rgb = tg.color.eval(uv);
                for c in 0..3 {
                    let q = tex.rgba_map(layer, basis)[4 * t + c] as f64 / 255.0;
                    assert!((q - rgb[c]).abs() <= 0.5 / 255.0 + 1e-12);
                }
                let a = tex.rgba_map(layer, basis)[4 * t + 3] as f64 / 255.0;
                assert!((a - tg.alpha.eval(uv)).abs() <= 0.5 / 255.0 + 1e-12);
                tg.specular.eval(uv, &mut sh);
                for (q, &s) in tex.specular_map(layer, basis).unwrap()[t * SH_TEXEL_LEN..(t + 1) * SH_TEXEL_LEN].iter().zip(&sh) {
                    assert!((q.to_f64() - s).abs() <= s.abs() * 1e-3 + 1e-7);
                }
            }
        }
    }

    #[test]
    fn non_finite_generator_names_the_texel() {
        let mapper = BlendMapper::constant(1, &[0.0], &[1.0]).unwrap();
        let scene = AnalyticScene::new(
            Vec3::ZERO,
            crate::baker::scene::ShellField::sphere(),
            vec![0.0],
            vec![WarpGen::Constant([f64::NAN, 0.0])],
            vec![TexGen::constant([0.5; 3], 1.0)],
            mapper,
        )
        .unwrap();
        let err = bake_maps(&scene, &cfg(2, 2)).unwrap_err();
        assert!(matches!(err, BakeError::BadSample { map: "warp", layer: 0, basis: 0, texel: 0, .. }));
    }

    #[test]
    fn bake_is_deterministic() {
        let scene = preset("ellipsoid").unwrap();
        let config = BakeConfig { grid_res: 24, tex_res: 16, warp_res: 16, include_specular: true };
        assert_eq!(bake_asset(&scene, &config).unwrap(), bake_asset(&scene, &config).unwrap());
    }

    // Band-limited presets: half-resolution bake vs 2x2 box filter of the
    // full bake. Texel centers of the two grids differ by at most
    // 1 / (res - 1) in UV, so the bound is quantization plus a gradient term.
    #[test]
    fn half_resolution_bake_matches_box_filter() {
        let scene = preset("ellipsoid").unwrap();
        let full = bake_maps(&scene, &cfg(2, 256)).unwrap().1;
        let half = bake_maps(&scene, &cfg(2, 128)).unwrap().1;
        let mut worst = 0.0f64;
        for layer in [0, 6, 11] {
            for basis in [0, 5] {
                let f = full.rgba_map(layer, basis);
                let h = half.rgba_map(layer, basis);
                for r in 0..128 {
                    for c in 0..128 {
                        for ch in 0..4 {
                            let at = |rr: usize, cc: usize| f[(rr * 256 + cc) * 4 + ch] as f64;
                            let boxed = (at(2 * r, 2 * c) + at(2 * r + 1, 2 * c) + at(2 * r, 2 * c + 1) + at(2 * r + 1, 2 * c + 1)) / 4.0;
                            worst = worst.max((boxed - h[(r * 128 + c) * 4 + ch] as f64).abs());
                        }
                    }
                }
            }
        }
        assert!(worst <= 2.0, "worst difference {worst} steps");
    }

    #[test]
    fn decimate_identity_and_corners() {
        let scene = spheres();
        let mesh = bake_mesh(&scene, &cfg(4, 2)).unwrap();
        assert_eq!(decimate(&mesh, 4).unwrap(), mesh);
        let small = decimate(&mesh, 2).unwrap();
        assert_eq!(small.grid(), (2, 2));
        for (l, s) in mesh.layers().iter().zip(small.layers()) {
            assert_eq!(s.positions, vec![l.positions[0], l.positions[3], l.positions[12], l.positions[15]]);
            assert_eq!(s.indices.len(), 2);
        }
        assert!(small.is_nested(scene.center()));
    }

    #[test]
    fn decimate_rejects_non_divisor() {
        let mesh = bake_mesh(&spheres(), &cfg(6, 2)).unwrap();
        assert!(decimate(&mesh, 4).is_err());
        assert!(decimate(&mesh, 3).is_ok());
    }

    #[test]
    fn decimation_keeps_both_ends() {
        let idx = decimation_indices(512, 32);
        assert_eq!((idx[0], idx[31]), (0, 511));
        assert!(idx.windows(2).all(|w| (16..=17).contains(&(w[1] - w[0]))));
    }
}
