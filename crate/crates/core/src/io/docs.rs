//! JSON documents: camera rigs, scenes, poses and grid specs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FisheyeCamera, RigidTransform, Vec3};
use crate::grid::{CoordSys, GridSpec, LabelSet};
use crate::scalar::Real;
use crate::synth::{Scene, ScenePrimitive, Shape};

fn doc_err(what: &str, e: impl std::fmt::Display) -> Error {
    Error::Document(format!("{what}: {e}"))
}

pub const FISHEYE_MODEL: &str = "equidistant_fisheye";

fn default_model() -> String {
    FISHEYE_MODEL.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraDoc {
    pub name: String,
    #[serde(default = "default_model")]
    pub model: String,
    pub width: u32,
    pub height: u32,
    pub focal_px_per_rad: f64,
    pub cx: f64,
    pub cy: f64,
    /// Full field of view in degrees.
    pub fov_deg: f64,
    /// Camera-to-ego transform, row-major 4×4.
    pub pose: Vec<f64>,
}

/// A rig file is a bare camera array; `{"cameras": [...]}` is also read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RigDoc {
    pub cameras: Vec<CameraDoc>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RigInput {
    Bare(Vec<CameraDoc>),
    Wrapped { cameras: Vec<CameraDoc> },
}

fn pose_from_slice<T: Real>(m: &[f64], what: &str) -> Result<RigidTransform<T>> {
    let arr: [f64; 16] = m
        .try_into()
        .map_err(|_| doc_err(what, format!("expected 16 values, got {}", m.len())))?;
    RigidTransform::from_row_major(&arr.map(T::lit)).map_err(|e| doc_err(what, e))
}

impl RigDoc {
    pub fn from_rig<T: Real>(rig: &[FisheyeCamera<T>]) -> Self {
        Self {
            cameras: rig
                .iter()
                .map(|c| CameraDoc {
                    name: c.name.clone(),
                    model: default_model(),
                    width: c.width,
                    height: c.height,
                    focal_px_per_rad: c.focal.as_f64(),
                    cx: c.cx.as_f64(),
                    cy: c.cy.as_f64(),
                    fov_deg: c.fov.as_f64().to_degrees(),
                    pose: c.pose().to_row_major().iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_rig<T: Real>(&self) -> Result<Vec<FisheyeCamera<T>>> {
        self.cameras
            .iter()
            .map(|c| {
                let what = format!("camera `{}`", c.name);
                if c.model != FISHEYE_MODEL {
                    return Err(doc_err(&what, format!("unsupported model `{}`", c.model)));
                }
                let pose = pose_from_slice(&c.pose, &what)?;
                FisheyeCamera::new(
                    c.name.clone(),
                    c.width,
                    c.height,
                    T::lit(c.focal_px_per_rad),
                    T::lit(c.cx),
                    T::lit(c.cy),
                    T::lit(c.fov_deg.to_radians()),
                    pose,
                )
                .map_err(|e| doc_err(&what, e))
            })
            .collect()
    }
}

pub fn parse_rig<T: Real>(json: &str) -> Result<Vec<FisheyeCamera<T>>> {
    let cameras = match serde_json::from_str::<RigInput>(json).map_err(|e| doc_err("rig", e))? {
        RigInput::Bare(c) | RigInput::Wrapped { cameras: c } => c,
    };
    RigDoc { cameras }.to_rig()
}

pub fn rig_to_json<T: Real>(rig: &[FisheyeCamera<T>]) -> String {
    serde_json::to_string_pretty(&RigDoc::from_rig(rig)).expect("rig serializes")
}

/// Class given by name or numeric id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelRef {
    Id(u8),
    Name(String),
}

impl LabelRef {
    pub fn resolve(&self, labels: &LabelSet) -> Result<u8> {
        let id = match self {
            LabelRef::Id(i) => *i,
            LabelRef::Name(n) => labels
                .id(n)
                .ok_or_else(|| doc_err("label", format!("unknown class `{n}`")))?,
        };
        if id as usize >= labels.num_classes() {
            return Err(doc_err(
                "label",
                format!("class id {id} ≥ {}", labels.num_classes()),
            ));
        }
        Ok(id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum PrimitiveDoc {
    HalfSpace {
        normal: [f64; 3],
        offset: f64,
        label: LabelRef,
    },
    /// Horizontal ground plane `z ≤ height`.
    Ground { height: f64, label: LabelRef },
    Box {
        min: [f64; 3],
        max: [f64; 3],
        label: LabelRef,
    },
    Cylinder {
        center: [f64; 2],
        radius: f64,
        z: [f64; 2],
        label: LabelRef,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        label: LabelRef,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDoc {
    pub primitives: Vec<PrimitiveDoc>,
}

impl SceneDoc {
    pub fn from_scene<T: Real>(scene: &Scene<T>, labels: &LabelSet) -> Self {
        let name = |l: u8| {
            labels
                .name(l)
                .map_or(LabelRef::Id(l), |n| LabelRef::Name(n.to_string()))
        };
        let v = |p: Vec3<T>| p.to_f64();
        Self {
            primitives: scene
                .primitives
                .iter()
                .map(|p| {
                    let label = name(p.label());
                    match *p.shape() {
                        Shape::HalfSpace { normal, offset } => PrimitiveDoc::HalfSpace {
                            normal: v(normal),
                            offset: offset.as_f64(),
                            label,
                        },
                        Shape::Box { min, max } => PrimitiveDoc::Box {
                            min: v(min),
                            max: v(max),
                            label,
                        },
                        Shape::Cylinder { center, radius, z } => PrimitiveDoc::Cylinder {
                            center: [center.0.as_f64(), center.1.as_f64()],
                            radius: radius.as_f64(),
                            z: [z.0.as_f64(), z.1.as_f64()],
                            label,
                        },
                        Shape::Sphere { center, radius } => PrimitiveDoc::Sphere {
                            center: v(center),
                            radius: radius.as_f64(),
                            label,
                        },
                    }
                })
                .collect(),
        }
    }

    pub fn to_scene<T: Real>(&self, labels: &LabelSet) -> Result<Scene<T>> {
        let v = |a: [f64; 3]| Vec3::from_f64(a);
        let prims = self
            .primitives
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (shape, label) = match p {
                    PrimitiveDoc::HalfSpace {
                        normal,
                        offset,
                        label,
                    } => (
                        Shape::HalfSpace {
                            normal: v(*normal),
                            offset: T::lit(*offset),
                        },
                        label,
                    ),
                    PrimitiveDoc::Ground { height, label } => (
                        Shape::HalfSpace {
                            normal: Vec3::new(T::zero(), T::zero(), T::one()),
                            offset: T::lit(*height),
                        },
                        label,
                    ),
                    PrimitiveDoc::Box { min, max, label } => (
                        Shape::Box {
                            min: v(*min),
                            max: v(*max),
                        },
                        label,
                    ),
                    PrimitiveDoc::Cylinder {
                        center,
                        radius,
                        z,
                        label,
                    } => (
                        Shape::Cylinder {
                            center: (T::lit(center[0]), T::lit(center[1])),
                            radius: T::lit(*radius),
                            z: (T::lit(z[0]), T::lit(z[1])),
                        },
                        label,
                    ),
                    PrimitiveDoc::Sphere {
                        center,
                        radius,
                        label,
                    } => (
                        Shape::Sphere {
                            center: v(*center),
                            radius: T::lit(*radius),
                        },
                        label,
                    ),
                };
                let what = format!("primitive {i}");
                ScenePrimitive::new(shape, label.resolve(labels).map_err(|e| doc_err(&what, e))?)
                    .map_err(|e| doc_err(&what, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene::new(prims))
    }
}

pub fn parse_scene<T: Real>(json: &str, labels: &LabelSet) -> Result<Scene<T>> {
    serde_json::from_str::<SceneDoc>(json)
        .map_err(|e| doc_err("scene", e))?
        .to_scene(labels)
}

pub fn scene_to_json<T: Real>(scene: &Scene<T>, labels: &LabelSet) -> String {
    serde_json::to_string_pretty(&SceneDoc::from_scene(scene, labels)).expect("scene serializes")
}

/// `{"pose": [16 row-major values]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub pose: Vec<f64>,
}

pub fn parse_pose<T: Real>(json: &str) -> Result<RigidTransform<T>> {
    let doc: PoseDoc = serde_json::from_str(json).map_err(|e| doc_err("pose", e))?;
    pose_from_slice(&doc.pose, "pose")
}

pub fn pose_to_json<T: Real>(pose: &RigidTransform<T>) -> String {
    let doc = PoseDoc {
        pose: pose.to_row_major().iter().map(|x| x.as_f64()).collect(),
    };
    serde_json::to_string(&doc).expect("pose serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordSysDoc {
    Cuboid,
    Cylindrical,
}

/// Grid spec as JSON; the cylindrical θ range may be omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDoc {
    pub coord_sys: CoordSysDoc,
    pub dims: [usize; 3],
    pub ranges: Vec<[f64; 2]>,
}

impl SpecDoc {
    pub fn from_spec<T: Real>(spec: &GridSpec<T>) -> Self {
        Self {
            coord_sys: match spec.coord_sys() {
                CoordSys::Cuboid => CoordSysDoc::Cuboid,
                CoordSys::Cylindrical => CoordSysDoc::Cylindrical,
            },
            dims: spec.dims(),
            ranges: spec
                .ranges()
                .iter()
                .map(|r| [r.0.as_f64(), r.1.as_f64()])
                .collect(),
        }
    }

    pub fn to_spec<T: Real>(&self) -> Result<GridSpec<T>> {
        let r = |a: [f64; 2]| (T::lit(a[0]), T::lit(a[1]));
        let spec = match (self.coord_sys, self.ranges.as_slice()) {
            (CoordSysDoc::Cylindrical, [rr, zr]) => {
                GridSpec::cylindrical(self.dims, r(*rr), r(*zr))
            }
            (CoordSysDoc::Cylindrical, [a, b, c]) => {
                GridSpec::new(CoordSys::Cylindrical, self.dims, [r(*a), r(*b), r(*c)])
            }
            (CoordSysDoc::Cuboid, [a, b, c]) => GridSpec::cuboid(self.dims, [r(*a), r(*b), r(*c)]),
            _ => {
                return Err(doc_err(
                    "spec",
                    format!("{} ranges given", self.ranges.len()),
                ))
            }
        };
        spec.map_err(|e| doc_err("spec", e))
    }
}

pub fn parse_spec<T: Real>(json: &str) -> Result<GridSpec<T>> {
    serde_json::from_str::<SpecDoc>(json)
        .map_err(|e| doc_err("spec", e))?
        .to_spec()
}

pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_rig, demo_scene};

    #[test]
    fn rig_round_trip() {
        let rig = default_rig::<f64>();
        let back: Vec<FisheyeCamera<f64>> = parse_rig(&rig_to_json(&rig)).unwrap();
        assert_eq!(back.len(), 6);
        for (a, b) in rig.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert!(a.pose().max_abs_diff(b.pose()) < 1e-15);
            assert!((a.fov - b.fov).abs() < 1e-15);
        }
        let json = rig_to_json(&rig);
        assert!(json.trim_start().starts_with('['));
        assert!(json.contains("\"focal_px_per_rad\"") && json.contains("\"fov_deg\""));
        let wrapped = format!("{{\"cameras\": {json}}}");
        assert_eq!(parse_rig::<f64>(&wrapped).unwrap().len(), 6);
        let odd = json.replace("equidistant_fisheye", "pinhole");
        assert!(parse_rig::<f64>(&odd).is_err());
    }

    #[test]
    fn scene_round_trip() {
        let labels = LabelSet::default();
        let s = demo_scene::<f64>(3);
        let back: Scene<f64> = parse_scene(&scene_to_json(&s, &labels), &labels).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn scene_by_hand() {
        let json = r#"{"primitives":[
            {"shape":"ground","height":-1.7,"label":"road"},
            {"shape":"sphere","center":[5,0,0],"radius":1,"label":7}]}"#;
        let s: Scene<f64> = parse_scene(json, &LabelSet::default()).unwrap();
        assert_eq!(s.primitives.len(), 2);
        assert_eq!(s.primitives[1].label(), 7);
        let bad =
            r#"{"primitives":[{"shape":"sphere","center":[0,0,0],"radius":1,"label":"dragon"}]}"#;
        assert!(matches!(
            parse_scene::<f64>(bad, &LabelSet::default()),
            Err(Error::Document(_))
        ));
    }

    #[test]
    fn pose_and_spec_docs() {
        let t = RigidTransform::<f64>::from_yaw(0.3, Vec3::new(1.0, 2.0, 3.0));
        let back: RigidTransform<f64> = parse_pose(&pose_to_json(&t)).unwrap();
        assert!(back.max_abs_diff(&t) < 1e-15);
        assert!(parse_pose::<f64>(r#"{"pose":[1,2,3]}"#).is_err());

        let spec = GridSpec::<f64>::default_cylindrical();
        let json = serde_json::to_string(&SpecDoc::from_spec(&spec)).unwrap();
        assert_eq!(parse_spec::<f64>(&json).unwrap(), spec);
        let short =
            r#"{"coord_sys":"cylindrical","dims":[128,200,16],"ranges":[[0,25.6],[-2.8,3.6]]}"#;
        assert_eq!(parse_spec::<f64>(short).unwrap(), spec);
    }
}
