"""Nemenyi critical values q_alpha = studentized range quantile (df=inf) / sqrt(2).

Generated offline; keys are alpha, then number of treatments k (2..50).
"""

Q_ALPHA: dict[float, dict[int, float]] = {
    0.01: {
        2: 2.5758293035,
        3: 2.9134943378,
        4: 3.1132503453,
        5: 3.2546859715,
        6: 3.3637403685,
        7: 3.4522128234,
        8: 3.5264706985,
        9: 3.5903386986,
        10: 3.6462915484,
        11: 3.6960208999,
        12: 3.7407331678,
        13: 3.7813182411,
        14: 3.8184508563,
        15: 3.8526544765,
        16: 3.8843431545,
        17: 3.9138498871,
        18: 3.9414463675,
        19: 3.9673570833,
        20: 3.9917695942,
        21: 4.0148421653,
        22: 4.0367095313,
        23: 4.0574873140,
        24: 4.0772754533,
        25: 4.0961609035,
        26: 4.1142197763,
        27: 4.1315190608,
        28: 4.1481180164,
        29: 4.1640693110,
        30: 4.1794199576,
        31: 4.1942120907,
        32: 4.2084836147,
        33: 4.2222687483,
        34: 4.2355984845,
        35: 4.2485009809,
        36: 4.2610018935,
        37: 4.2731246622,
        38: 4.2848907578,
        39: 4.2963198949,
        40: 4.3074302171,
        41: 4.3182384587,
        42: 4.3287600860,
        43: 4.3390094213,
        44: 4.3489997526,
        45: 4.3587434299,
        46: 4.3682519512,
        47: 4.3775360384,
        48: 4.3866057053,
        49: 4.3954703179,
        50: 4.4041386494,
    },
    0.05: {
        2: 1.9599639845,
        3: 2.3437005864,
        4: 2.5690317725,
        5: 2.7277743709,
        6: 2.8497054196,
        7: 2.9483200175,
        8: 3.0308784496,
        9: 3.1017303413,
        10: 3.1636835771,
        11: 3.2186536073,
        12: 3.2680039245,
        13: 3.3127385934,
        14: 3.3536177519,
        15: 3.3912302838,
        16: 3.4260413794,
        17: 3.4584247073,
        18: 3.4886847994,
        19: 3.5170730087,
        20: 3.5437991315,
        21: 3.5690400300,
        22: 3.5929461370,
        23: 3.6156464372,
        24: 3.6372523317,
        25: 3.6578606731,
        26: 3.6775561759,
        27: 3.6964133492,
        28: 3.7144980614,
        29: 3.7318688169,
        30: 3.7485778068,
        31: 3.7646717794,
        32: 3.7801927658,
        33: 3.7951786900,
        34: 3.8096638827,
        35: 3.8236795186,
        36: 3.8372539887,
        37: 3.8504132197,
        38: 3.8631809494,
        39: 3.8755789644,
        40: 3.8876273068,
        41: 3.8993444542,
        42: 3.9107474772,
        43: 3.9218521778,
        44: 3.9326732110,
        45: 3.9432241928,
        46: 3.9535177947,
        47: 3.9635658291,
        48: 3.9733793246,
        49: 3.9829685930,
        50: 3.9923432900,
    },
    0.1: {
        2: 1.6448536270,
        3: 2.0522927305,
        4: 2.2913414969,
        5: 2.4595157643,
        6: 2.5885206019,
        7: 2.6927321010,
        8: 2.7798836082,
        9: 2.8546064312,
        10: 2.9198888401,
        11: 2.9777682513,
        12: 3.0296941832,
        13: 3.0767334683,
        14: 3.1196933331,
        15: 3.1591988189,
        16: 3.1957434330,
        17: 3.2297234009,
        18: 3.2614614896,
        19: 3.2912239866,
        20: 3.3192330595,
        21: 3.3456759245,
        22: 3.3707117596,
        23: 3.3944769972,
        24: 3.4170894284,
        25: 3.4386514268,
        26: 3.4592525062,
        27: 3.4789713718,
        28: 3.4978775802,
        29: 3.5160328936,
        30: 3.5334923935,
        31: 3.5503054035,
        32: 3.5665162587,
        33: 3.5821649512,
        34: 3.5972876752,
        35: 3.6119172894,
        36: 3.6260837116,
        37: 3.6398142565,
        38: 3.6531339271,
        39: 3.6660656664,
        40: 3.6786305758,
        41: 3.6908481056,
        42: 3.7027362216,
        43: 3.7143115512,
        44: 3.7255895119,
        45: 3.7365844255,
        46: 3.7473096182,
        47: 3.7577775105,
        48: 3.7679996964,
        49: 3.7779870151,
        50: 3.7877496142,
    },
}
